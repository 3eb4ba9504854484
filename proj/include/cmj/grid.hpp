#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace cmj {

// Uniform-grid discretization of a function on [0, T], t_i = i*h.
// Carrier for resolvent kernels, tails, mean curves and error diagnostics.
struct GridFunction {
    double h = 0.0;
    std::vector<double> values;

    GridFunction() = default;
    GridFunction(double step, std::vector<double> v) : h(step), values(std::move(v)) {
        if (h <= 0.0) throw std::invalid_argument("GridFunction: step must be > 0");
        if (values.size() < 2) throw std::invalid_argument("GridFunction: need at least 2 points");
    }
    static GridFunction zeros(double step, std::size_t n) {
        return GridFunction(step, std::vector<double>(n, 0.0));
    }

    std::size_t size() const { return values.size(); }
    double t(std::size_t i) const { return static_cast<double>(i) * h; }
    double horizon() const { return t(size() - 1); }
    double operator[](std::size_t i) const { return values[i]; }
    double& operator[](std::size_t i) { return values[i]; }

    bool same_grid(const GridFunction& o) const {
        return size() == o.size() && std::abs(h - o.h) <= 1e-15 * std::max(h, o.h);
    }
    void require_same_grid(const GridFunction& o, const char* what) const {
        if (!same_grid(o))
            throw std::invalid_argument(std::string(what) + ": grid mismatch (h or length differ)");
    }

    // Linear interpolation; t beyond the horizon returns the last value.
    double at(double time) const {
        if (time <= 0.0) return values.front();
        double x = time / h;
        auto i = static_cast<std::size_t>(x);
        if (i >= size() - 1) return values.back();
        double w = x - static_cast<double>(i);
        return values[i] * (1.0 - w) + values[i + 1] * w;
    }

    double trapezoid() const {
        double s = 0.5 * (values.front() + values.back());
        for (std::size_t i = 1; i + 1 < size(); ++i) s += values[i];
        return s * h;
    }

    // Running integral \int_0^{t_i}; same grid.
    GridFunction cumulative() const {
        GridFunction out = zeros(h, size());
        double acc = 0.0;
        for (std::size_t i = 1; i < size(); ++i) {
            acc += 0.5 * h * (values[i - 1] + values[i]);
            out.values[i] = acc;
        }
        return out;
    }

    double sup_norm() const {
        double m = 0.0;
        for (double v : values) m = std::max(m, std::abs(v));
        return m;
    }

    // L2 norm on [0, T] by trapezoid of the squared values.
    double l2_norm() const {
        double s = 0.5 * (values.front() * values.front() + values.back() * values.back());
        for (std::size_t i = 1; i + 1 < size(); ++i) s += values[i] * values[i];
        return std::sqrt(s * h);
    }

    GridFunction& operator+=(const GridFunction& o) {
        require_same_grid(o, "GridFunction::operator+=");
        for (std::size_t i = 0; i < size(); ++i) values[i] += o.values[i];
        return *this;
    }
    GridFunction& operator-=(const GridFunction& o) {
        require_same_grid(o, "GridFunction::operator-=");
        for (std::size_t i = 0; i < size(); ++i) values[i] -= o.values[i];
        return *this;
    }
    GridFunction& operator*=(double c) {
        for (double& v : values) v *= c;
        return *this;
    }
};

inline GridFunction operator+(GridFunction a, const GridFunction& b) { return a += b; }
inline GridFunction operator-(GridFunction a, const GridFunction& b) { return a -= b; }
inline GridFunction operator*(double c, GridFunction a) { return a *= c; }

// Number of grid points covering [0, T] with step h (T rounded up to a whole step).
inline std::size_t grid_points(double T, double h) {
    if (T <= 0.0 || h <= 0.0) throw std::invalid_argument("grid_points: T and h must be > 0");
    return static_cast<std::size_t>(std::ceil(T / h - 1e-9)) + 1;
}

}  // namespace cmj
