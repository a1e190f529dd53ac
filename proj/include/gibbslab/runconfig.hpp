#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "gibbslab/errors.hpp"

namespace gibbslab {

// One experiment parameter: key, default value, help text.  Commands declare
// their full table so --help documents every default and unknown config keys
// can be rejected by name.
struct ParamSpec {
    const char* key;
    const char* def;
    const char* help;
};

// Flat key=value configuration.  Every lookup resolves through a ParamSpec
// default and is recorded; the config hash covers exactly the resolved pairs,
// so equal hashes pin the effective experiment.
class ExperimentConfig {
  public:
    static ExperimentConfig from_file(const std::string& path);
    static ExperimentConfig from_text(const std::string& text);

    // CLI flag overrides take precedence over file entries.
    void set(const std::string& key, const std::string& value);

    void validate_keys(const std::vector<ParamSpec>& specs) const;

    std::string get_string(const ParamSpec& spec) const;
    double get_double(const ParamSpec& spec) const;
    int get_int(const ParamSpec& spec) const;
    std::uint64_t get_u64(const ParamSpec& spec) const;
    std::vector<double> get_list(const ParamSpec& spec) const;  // comma separated

    // FNV-1a over the sorted resolved "key=value" lines.
    std::uint64_t hash() const;

  private:
    std::map<std::string, std::string> entries_;
    mutable std::map<std::string, std::string> resolved_;

    const std::string& resolve(const ParamSpec& spec) const;
};

// Canonical numeric cell: shortest round-trip-stable decimal form.
std::string format_csv_double(double v);

// CSV with a mandatory header row and a single trailing metadata comment
// carrying the config hash and seed.  Formatting is fixed so equal configs
// reproduce identical bytes; text cells are quoted when they contain
// delimiters.
class CsvWriter {
  public:
    CsvWriter(const std::string& path, const std::vector<std::string>& columns);

    void row(const std::vector<double>& values);
    void text_row(const std::vector<std::string>& cells);
    void finish(std::uint64_t config_hash, std::uint64_t seed);

    ~CsvWriter();

  private:
    std::ofstream out_;
    std::string path_;
    size_t columns_ = 0;
    bool finished_ = false;
};

}  // namespace gibbslab
