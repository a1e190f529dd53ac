#include "gibbslab/borel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "gibbslab/linalg.hpp"

namespace gibbslab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double envelope(double nu, double sigma, int m) {
    return nu * std::pow(sigma, m) * std::tgamma(m + 1.0);
}

// Laplace strip parameter; R = 2 max(1, z) keeps every z > 0 inside the
// domain Re 1/z > 1/R.
double strip_radius(double z) { return 2.0 * std::max(1.0, z); }

double poly_at(const std::vector<double>& c, double t) {
    double acc = 0.0;
    for (int k = static_cast<int>(c.size()) - 1; k >= 0; --k) acc = acc * t + c[k];
    return acc;
}

// re-centre c(t) to c(h + u), coefficients in u
void shift_poly(std::vector<double>& c, double h) {
    const int n = static_cast<int>(c.size());
    for (int k = 0; k < n - 1; ++k)
        for (int i = n - 2; i >= k; --i) c[i] += h * c[i + 1];
}

bool solve_dense(std::vector<std::vector<double>>& A, std::vector<double>& rhs) {
    const int n = static_cast<int>(rhs.size());
    double scale = 1e-300;
    for (const auto& row : A)
        for (double v : row) scale = std::max(scale, std::abs(v));
    for (int c = 0; c < n; ++c) {
        int piv = c;
        for (int r = c + 1; r < n; ++r)
            if (std::abs(A[r][c]) > std::abs(A[piv][c])) piv = r;
        if (std::abs(A[piv][c]) <= 1e-13 * scale) return false;
        std::swap(A[c], A[piv]);
        std::swap(rhs[c], rhs[piv]);
        for (int r = c + 1; r < n; ++r) {
            const double f = A[r][c] / A[c][c];
            for (int k = c; k < n; ++k) A[r][k] -= f * A[c][k];
            rhs[r] -= f * rhs[c];
        }
    }
    for (int c = n - 1; c >= 0; --c) {
        double s = rhs[c];
        for (int k = c + 1; k < n; ++k) s -= A[c][k] * rhs[k];
        rhs[c] = s / A[c][c];
    }
    return true;
}

struct RationalModel {
    double b0 = 0.0;             // constant split off before fitting
    std::vector<double> p, q;    // model of B - b0; q[0] = 1
    int K = 0;                   // denominator order; 0 = polynomial fallback
    std::vector<double> raw;     // input coefficients, used by the fallback
};

// local Taylor coefficients of the model at anchor t, M terms
std::vector<double> model_local(const RationalModel& mod, double t, int M) {
    if (mod.K == 0) {
        std::vector<double> c = mod.raw;
        shift_poly(c, t);
        return c;
    }
    std::vector<double> ps(M, 0.0), qs(mod.q);
    std::copy(mod.p.begin(), mod.p.end(), ps.begin());
    shift_poly(ps, t);
    shift_poly(qs, t);
    std::vector<double> c(M, 0.0);
    for (int k = 0; k < M; ++k) {
        double s = ps[k];
        for (int j = 1; j <= std::min(k, mod.K); ++j) s -= qs[j] * c[k - j];
        c[k] = s / qs[0];
    }
    c[0] += mod.b0;
    return c;
}

// Denominator-order descent: accept the largest K whose fit reproduces every
// input coefficient at its own rounding scale and keeps q positive on [0, T].
RationalModel fit_model(const std::vector<double>& b, double T) {
    RationalModel mod;
    mod.raw = b;
    mod.b0 = b.front();
    const int M = static_cast<int>(b.size());
    std::vector<double> c(b);
    c[0] = 0.0;
    for (int K = M / 2; K >= 1; --K) {
        const int L = M - 1 - K;
        std::vector<std::vector<double>> A(K, std::vector<double>(K, 0.0));
        std::vector<double> rhs(K);
        for (int i = 0; i < K; ++i) {
            const int m = L + 1 + i;
            for (int j = 1; j <= K; ++j) A[i][j - 1] = m - j >= 0 ? c[m - j] : 0.0;
            rhs[i] = -c[m];
        }
        if (!solve_dense(A, rhs)) continue;
        std::vector<double> q(K + 1, 0.0);
        q[0] = 1.0;
        bool sane = true;
        for (int j = 1; j <= K; ++j) {
            q[j] = rhs[j - 1];
            if (!(std::abs(q[j]) <= 1e12)) sane = false;
        }
        if (!sane) continue;
        std::vector<double> p(L + 1, 0.0);
        for (int k = 0; k <= L; ++k)
            for (int j = 0; j <= std::min(k, K); ++j) p[k] += q[j] * c[k - j];
        std::vector<double> recon(M, 0.0);
        bool ok = true;
        for (int k = 0; k < M && ok; ++k) {
            double s = k <= L ? p[k] : 0.0;
            double terms = std::abs(c[k]);
            for (int j = 1; j <= std::min(k, K); ++j) {
                s -= q[j] * recon[k - j];
                terms = std::max(terms, std::abs(q[j]) * std::abs(recon[k - j]));
            }
            recon[k] = s;
            if (std::abs(recon[k] - c[k]) > 1e-8 * std::max(terms, 1e-300)) ok = false;
        }
        if (!ok) continue;
        const int samples = 32 * (K + 1);
        for (int i = 0; i <= samples && ok; ++i)
            if (poly_at(q, T * i / samples) <= 1e-12) ok = false;
        if (!ok) continue;
        mod.p = std::move(p);
        mod.q = std::move(q);
        mod.K = K;
        return mod;
    }
    return mod;
}

}  // namespace

double BorelSeries::radius() const { return sigma > 0.0 ? 1.0 / sigma : kInf; }

BorelSeries borel_transform(const CoefficientSeries& series) {
    if (series.size() < 2) throw ParameterError("borel_transform: need at least two terms");
    CoefficientSeries fitted = series;
    if (fitted.nu == 0.0 && fitted.sigma == 0.0) fit_growth(fitted);
    BorelSeries b;
    b.nu = fitted.nu;
    b.sigma = fitted.sigma;
    b.coefficients.resize(fitted.size());
    double fact = 1.0;
    for (int m = 0; m < fitted.size(); ++m) {
        if (m > 0) fact *= m;
        const double cap = envelope(fitted.nu, fitted.sigma, m);
        if (std::abs(fitted.values[m]) > cap * (1.0 + 1e-9))
            throw InvariantError("borel_transform: growth envelope does not bound the series");
        b.coefficients[m] = fitted.values[m] / fact;
    }
    return b;
}

double ContinuationGrid::eval(int j, double t) const {
    const double u = t - anchors[j];
    double acc = 0.0;
    for (int k = static_cast<int>(local[j].size()) - 1; k >= 0; --k) acc = acc * u + local[j][k];
    return acc;
}

ContinuationGrid continue_series(const BorelSeries& series, double T, double step_factor,
                                 double residual_tol) {
    if (!(T > 0.0)) throw ParameterError("continue_series: T must be positive");
    if (!(step_factor >= 4.0))
        throw ParameterError("continue_series: step factor below 4 leaves the quarter-radius step");
    const int M = series.size();
    if (M < 2) throw ParameterError("continue_series: need at least two coefficients");

    const double step = series.sigma > 0.0 ? 1.0 / (step_factor * series.sigma) : T;
    if (T / step > 2e6) throw ResourceError("continue_series: step too small for the target T");

    const RationalModel mod = fit_model(series.coefficients, T);

    ContinuationGrid g;
    g.nu = series.nu;
    g.sigma = series.sigma;
    g.anchors.push_back(0.0);
    g.local.push_back(model_local(mod, 0.0, M));

    double t = 0.0;
    while (t < T * (1.0 - 1e-15)) {
        const double h = std::min(step, T - t);
        std::vector<double> next = model_local(mod, t + h, M);
        if (mod.K >= 1)
            g.shift_residual += std::abs(poly_at(g.local.back(), h) - next[0]);
        else
            g.shift_residual +=
                g.nu * std::pow(g.sigma, M) * (std::pow(t + h, M) - std::pow(t, M));
        if (g.shift_residual > residual_tol) {
            std::ostringstream os;
            os << "continue_series: shift residual " << g.shift_residual
               << " exceeds the tolerance; reachable T = " << t;
            throw ResourceError(os.str());
        }
        t += h;
        g.anchors.push_back(t);
        g.local.push_back(std::move(next));
    }
    return g;
}

LaplaceResult laplace_sum(const ContinuationGrid& grid, double z, double tail_tol) {
    if (!(z > 0.0)) throw ParameterError("laplace_sum: z must be positive");
    if (grid.anchors.size() < 2) throw ParameterError("laplace_sum: grid has no intervals");
    const double R = strip_radius(z);
    const double rate = 1.0 / z - 1.0 / R;
    if (!(rate > 0.0)) throw ParameterError("laplace_sum: z outside the Laplace domain");

    LaplaceResult out;
    out.shift_residual = grid.shift_residual;
    double acc = 0.0;
    for (size_t j = 0; j + 1 < grid.anchors.size(); ++j) {
        const double a = grid.anchors[j], b = grid.anchors[j + 1];
        // keep each Gauss panel within a few e-foldings of the weight
        const int panels = std::clamp(static_cast<int>((b - a) / (4.0 * z)) + 1, 1, 256);
        for (int s = 0; s < panels; ++s) {
            const double pa = a + (b - a) * s / panels;
            const double pb = a + (b - a) * (s + 1) / panels;
            const QuadRule rule = gauss_legendre(16, pa, pb);
            for (size_t i = 0; i < rule.nodes.size(); ++i)
                acc += rule.weights[i] * std::exp(-rule.nodes[i] / z) *
                       grid.eval(static_cast<int>(j), rule.nodes[i]);
        }
    }
    out.value = acc / z;

    const double sig = std::max(1.0, grid.sigma);
    out.tail_bound = R * grid.nu * sig * std::exp(-grid.T() * rate) / (rate * z);
    if (out.tail_bound > tail_tol * std::max(1.0, std::abs(out.value))) {
        std::ostringstream os;
        os << "laplace_sum: tail bound " << out.tail_bound << " at T = " << grid.T()
           << " exceeds the tolerance";
        throw ResourceError(os.str());
    }
    return out;
}

LaplaceResult resum_detail(const CoefficientSeries& series, double z) {
    CoefficientSeries s = series;
    if (s.nu == 0.0 && s.sigma == 0.0) fit_growth(s);
    bool allzero = true;
    for (double v : s.values)
        if (v != 0.0) allzero = false;
    if (allzero) return {0.0, 0.0, 0.0};

    const BorelSeries b = borel_transform(s);
    const double R = strip_radius(z);
    const double rate = 1.0 / z - 1.0 / R;
    const double scale = std::max(1.0, R * s.nu * std::max(1.0, s.sigma) / (z * rate));
    double T = (std::log(scale) + 14.0) / rate;
    LaplaceResult out;
    for (int round = 0; round < 8; ++round) {
        const ContinuationGrid g = continue_series(b, T, 5.0, kInf);
        out = laplace_sum(g, z, kInf);
        const double target = 1e-6 * std::max(std::abs(out.value), 1e-12);
        if (out.tail_bound <= target) break;
        T += std::log(out.tail_bound / target) / rate + 1.0 / rate;
    }
    return out;
}

double borel_resum(const CoefficientSeries& series, double z) { return resum_detail(series, z).value; }

DistanceResult resummation_distance(const CoefficientSeries& a, const CoefficientSeries& b,
                                    double z) {
    const LaplaceResult ra = resum_detail(a, z);
    const LaplaceResult rb = resum_detail(b, z);
    DistanceResult d;
    d.distance = std::abs(ra.value - rb.value);
    d.budget = ra.tail_bound + rb.tail_bound + ra.shift_residual + rb.shift_residual;
    return d;
}

ToyRational toy_coefficient_exact(int m) {
    if (m < 0 || m > 16) throw ParameterError("toy_coefficient_exact: m must lie in [0, 16]");
    ToyRational r;
    r.num = 1;
    r.den = 1;
    for (int j = 1; j <= m; ++j) {
        r.num *= -static_cast<__int128>(4 * j - 1) * (4 * j - 3);
        int odd = j;
        while (odd % 2 == 0) {
            odd /= 2;
            r.den *= 2;
        }
        if (r.num % odd != 0) throw InvariantError("toy_coefficient_exact: inexact division");
        r.num /= odd;
        while (r.den > 1 && r.num % 2 == 0) {
            r.num /= 2;
            r.den /= 2;
        }
    }
    return r;
}

CoefficientSeries toy_series(int M) {
    if (M < 1) throw ParameterError("toy_series: M must be >= 1");
    CoefficientSeries s;
    s.classical = true;
    s.tau = kInf;
    s.values.resize(M);
    for (int m = 0; m < M; ++m) s.values[m] = toy_coefficient_exact(m).value();
    fit_growth(s);
    return s;
}

double toy_oracle(double z) {
    if (!(z >= 0.0)) throw ParameterError("toy_oracle: z must be >= 0");
    // e^{-x^2/2} < 1e-22 beyond x = 10; z >= 0 only sharpens the decay
    const double X = 10.0;
    auto value = [&](int panels) {
        double acc = 0.0;
        for (int p = 0; p < panels; ++p) {
            const QuadRule rule = gauss_legendre(24, X * p / panels, X * (p + 1) / panels);
            for (size_t i = 0; i < rule.nodes.size(); ++i) {
                const double x = rule.nodes[i];
                acc += rule.weights[i] * std::exp(-z * x * x * x * x - 0.5 * x * x);
            }
        }
        return 2.0 * acc / std::sqrt(2.0 * std::numbers::pi);
    };
    int panels = 20;
    double coarse = value(panels);
    for (int round = 0; round < 6; ++round) {
        panels *= 2;
        const double fine = value(panels);
        if (std::abs(fine - coarse) <= 1e-12) return fine;
        coarse = fine;
    }
    throw ResourceError("toy_oracle: quadrature did not stabilize");
}

}  // namespace gibbslab
