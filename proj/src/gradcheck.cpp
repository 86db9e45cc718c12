#include "glsgn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace glsgn {

namespace {

std::vector<size_t> pick_coordinates(size_t n, size_t limit) {
    std::vector<size_t> idx;
    if (limit == 0 || n <= limit) {
        for (size_t i = 0; i < n; ++i) idx.push_back(i);
        return idx;
    }
    for (size_t k = 0; k < limit; ++k) idx.push_back(k * (n - 1) / (limit - 1 ? limit - 1 : 1));
    idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
    return idx;
}

double evaluate(const GradCheckCase& c) {
    NoGradGuard guard;
    return c.build(c.leaves).item();
}

} // namespace

GradCheckEntry check_gradient(const GradCheckCase& c) {
    GradCheckEntry entry;
    entry.op = c.op;
    entry.tolerance = c.tolerance;

    for (auto leaf : c.leaves) {
        leaf.set_requires_grad(true);
        leaf.zero_grad();
    }
    Tensor<double> loss = c.build(c.leaves);
    backward(loss);

    double worst = 0;
    for (auto leaf : c.leaves) {
        std::vector<double> analytic(leaf.values().size(), 0.0);
        if (leaf.has_grad())
            analytic.assign(leaf.grad().begin(), leaf.grad().end());
        for (size_t i : pick_coordinates(leaf.values().size(), c.max_coords_per_leaf)) {
            const double saved = leaf.values()[i];
            auto at = [&](double offset) {
                leaf.values()[i] = saved + offset;
                const double v = evaluate(c);
                leaf.values()[i] = saved;
                return v;
            };
            const double h = c.epsilon;
            const double numeric = c.fourth_order
                                       ? (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h)
                                       : (at(h) - at(-h)) / (2 * h);
            const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), kGradCheckFloor});
            worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
            ++entry.coordinates;
        }
        leaf.zero_grad();
    }
    entry.max_rel_error = worst;
    entry.passed = std::isfinite(worst) && worst <= c.tolerance;
    return entry;
}

GradCheckReport check_gradients(const std::vector<GradCheckCase>& cases) {
    GradCheckReport report;
    for (const auto& c : cases)
        report.entries.push_back(check_gradient(c));
    return report;
}

bool GradCheckReport::all_passed() const {
    return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.passed; });
}

std::string GradCheckReport::table() const {
    std::ostringstream os;
    char line[160];
    std::snprintf(line, sizeof line, "%-36s %14s %10s %8s %s\n", "op", "max_rel_err", "tolerance", "coords", "status");
    os << line;
    for (const auto& e : entries) {
        std::snprintf(line, sizeof line, "%-36s %14.3e %10.1e %8zu %s\n", e.op.c_str(), e.max_rel_error,
                      e.tolerance, e.coordinates, e.passed ? "ok" : "FAIL");
        os << line;
    }
    return os.str();
}

} // namespace glsgn
