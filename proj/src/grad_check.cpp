#include "mrt/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "mrt/rng.hpp"

namespace mrt {

bool GradCheckReport::passed() const {
    return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.passed; });
}

double GradCheckReport::max_rel_error() const {
    double m = 0.0;
    for (const auto& e : entries) m = std::max(m, e.max_rel_error);
    return m;
}

std::string GradCheckReport::to_string() const {
    std::ostringstream os;
    os << "gradient check (tol " << tolerance << "): " << (passed() ? "PASS" : "FAIL") << '\n';
    for (const auto& e : entries) {
        os << "  " << (e.passed ? "ok   " : "FAIL ") << e.name << "  checked=" << e.checked
           << "  max_rel_err=" << e.max_rel_error << '\n';
        if (!e.passed) {
            for (const auto& c : e.worst) {
                os << "      [" << c.index << "] analytic=" << c.analytic << " numeric=" << c.numeric
                   << " rel=" << c.rel_error << '\n';
            }
        }
    }
    return os.str();
}

GradCheckReport grad_check(const std::function<Var<double>()>& f, const NamedVars& params,
                           const GradCheckOptions& options,
                           const std::function<void(const std::string&, Tensor<double>&)>& tamper) {
    GradCheckReport report;
    report.tolerance = options.tolerance;
    if (params.empty()) {
        return report;
    }
    for (const auto& [name, p] : params) {
        if (!p.requires_grad()) {
            throw ConfigError("grad_check: '" + name + "' does not require gradients");
        }
        Var<double> handle = p;
        handle.zero_grad();
    }
    {
        Var<double> out = f();
        if (out.size() != 1) {
            throw DimensionError("grad_check: objective must be scalar, got " + shape_str(out.shape()));
        }
        backward(out);
    }
    Rng rng(options.seed);
    for (const auto& [name, p_const] : params) {
        Var<double> p = p_const;
        Tensor<double> analytic = p.grad();
        if (tamper) tamper(name, analytic);
        GradCheckEntry entry;
        entry.name = name;
        std::vector<std::size_t> coords(p.size());
        std::iota(coords.begin(), coords.end(), std::size_t{0});
        if (coords.size() > options.max_coords) {
            std::shuffle(coords.begin(), coords.end(), rng.engine());
            coords.resize(options.max_coords);
            std::sort(coords.begin(), coords.end());
        }
        std::vector<GradCheckCoord> results;
        for (auto i : coords) {
            auto& value = p.mutable_value();
            const double saved = value[i];
            double plus = 0.0;
            double minus = 0.0;
            {
                NoGradGuard guard;
                value[i] = saved + options.step;
                plus = f().value()[0];
                value[i] = saved - options.step;
                minus = f().value()[0];
                value[i] = saved;
            }
            const double numeric = (plus - minus) / (2.0 * options.step);
            const double a = analytic[i];
            const double denom = std::max({std::abs(a), std::abs(numeric), options.abs_floor});
            const double rel = std::abs(a - numeric) / denom;
            results.push_back({i, a, numeric, rel});
            entry.max_rel_error = std::max(entry.max_rel_error, rel);
        }
        entry.checked = results.size();
        entry.passed = entry.max_rel_error < options.tolerance;
        std::sort(results.begin(), results.end(), [](const auto& x, const auto& y) { return x.rel_error > y.rel_error; });
        results.resize(std::min(results.size(), options.worst_kept));
        entry.worst = std::move(results);
        report.entries.push_back(std::move(entry));
    }
    return report;
}

}  // namespace mrt
