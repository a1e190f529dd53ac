#include "gibbslab/runconfig.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <sstream>

namespace gibbslab {

namespace {

std::string trim(const std::string& s) {
    size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

ExperimentConfig parse_stream(std::istream& in, const std::string& origin) {
    ExperimentConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string body = trim(line);
        if (body.empty() || body[0] == '#') continue;
        size_t eq = body.find('=');
        if (eq == std::string::npos) {
            std::ostringstream msg;
            msg << origin << ":" << lineno << ": expected key=value, got '" << body << "'";
            throw ParameterError(msg.str());
        }
        std::string key = trim(body.substr(0, eq));
        if (key.empty()) {
            std::ostringstream msg;
            msg << origin << ":" << lineno << ": empty key";
            throw ParameterError(msg.str());
        }
        cfg.set(key, trim(body.substr(eq + 1)));
    }
    return cfg;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParameterError("config file not readable: " + path);
    return parse_stream(in, path);
}

ExperimentConfig ExperimentConfig::from_text(const std::string& text) {
    std::istringstream in(text);
    return parse_stream(in, "<text>");
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
    entries_[key] = value;
}

void ExperimentConfig::validate_keys(const std::vector<ParamSpec>& specs) const {
    for (const auto& [key, value] : entries_) {
        bool known = std::any_of(specs.begin(), specs.end(),
                                 [&](const ParamSpec& s) { return key == s.key; });
        if (!known) throw ParameterError("unknown config key '" + key + "'");
    }
}

const std::string& ExperimentConfig::resolve(const ParamSpec& spec) const {
    auto it = entries_.find(spec.key);
    resolved_[spec.key] = (it == entries_.end()) ? std::string(spec.def) : it->second;
    return resolved_[spec.key];
}

std::string ExperimentConfig::get_string(const ParamSpec& spec) const { return resolve(spec); }

double ExperimentConfig::get_double(const ParamSpec& spec) const {
    const std::string& raw = resolve(spec);
    try {
        size_t pos = 0;
        double v = std::stod(raw, &pos);
        if (pos != raw.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw ParameterError(std::string("config key '") + spec.key + "': expected a number, got '" +
                             raw + "'");
    }
}

int ExperimentConfig::get_int(const ParamSpec& spec) const {
    const std::string& raw = resolve(spec);
    try {
        size_t pos = 0;
        long long v = std::stoll(raw, &pos);
        if (pos != raw.size()) throw std::invalid_argument("trailing characters");
        if (v < INT32_MIN || v > INT32_MAX) throw std::out_of_range("int range");
        return static_cast<int>(v);
    } catch (const std::exception&) {
        throw ParameterError(std::string("config key '") + spec.key + "': expected an integer, got '" +
                             raw + "'");
    }
}

std::uint64_t ExperimentConfig::get_u64(const ParamSpec& spec) const {
    const std::string& raw = resolve(spec);
    try {
        size_t pos = 0;
        unsigned long long v = std::stoull(raw, &pos);
        if (pos != raw.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw ParameterError(std::string("config key '") + spec.key +
                             "': expected an unsigned integer, got '" + raw + "'");
    }
}

std::vector<double> ExperimentConfig::get_list(const ParamSpec& spec) const {
    const std::string& raw = resolve(spec);
    std::vector<double> out;
    std::string item;
    std::istringstream in(raw);
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        try {
            size_t pos = 0;
            out.push_back(std::stod(item, &pos));
            if (pos != item.size()) throw std::invalid_argument("trailing characters");
        } catch (const std::exception&) {
            throw ParameterError(std::string("config key '") + spec.key +
                                 "': expected a comma-separated number list, got '" + raw + "'");
        }
    }
    if (out.empty())
        throw ParameterError(std::string("config key '") + spec.key + "': empty list");
    return out;
}

std::uint64_t ExperimentConfig::hash() const {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const std::string& s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ull;
        }
    };
    for (const auto& [key, value] : resolved_) {
        mix(key);
        mix("=");
        mix(value);
        mix("\n");
    }
    return h;
}

std::string format_csv_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& columns)
    : out_(path), path_(path), columns_(columns.size()) {
    if (!out_) throw ParameterError("cannot open output file: " + path);
    if (columns.empty()) throw ParameterError("CsvWriter: need at least one column");
    for (size_t i = 0; i < columns.size(); ++i) {
        if (i) out_ << ',';
        out_ << columns[i];
    }
    out_ << '\n';
}

void CsvWriter::row(const std::vector<double>& values) {
    std::vector<std::string> cells;
    cells.reserve(values.size());
    for (double v : values) cells.push_back(format_csv_double(v));
    text_row(cells);
}

void CsvWriter::text_row(const std::vector<std::string>& cells) {
    if (finished_) throw InvariantError("CsvWriter: row after metadata in " + path_);
    if (cells.size() != columns_)
        throw InvariantError("CsvWriter: column count mismatch in " + path_);
    for (size_t i = 0; i < cells.size(); ++i) {
        if (i) out_ << ',';
        const std::string& c = cells[i];
        if (c.find_first_of(",\"\n") != std::string::npos) {
            out_ << '"';
            for (char ch : c) {
                if (ch == '"') out_ << '"';
                out_ << ch;
            }
            out_ << '"';
        } else {
            out_ << c;
        }
    }
    out_ << '\n';
}

void CsvWriter::finish(std::uint64_t config_hash, std::uint64_t seed) {
    if (finished_) throw InvariantError("CsvWriter: finish called twice for " + path_);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(config_hash));
    out_ << "# config_hash=" << buf << " seed=" << seed << '\n';
    finished_ = true;
    out_.flush();
}

CsvWriter::~CsvWriter() = default;

}  // namespace gibbslab
