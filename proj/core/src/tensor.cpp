#include "steercal/tensor.hpp"

#include "steercal/error.hpp"

#include <cmath>

namespace steercal {

void Matrix::append_row(std::span<const double> values) {
    if (rows_ == 0 && cols_ == 0) {
        cols_ = values.size();
    }
    if (values.size() != cols_) {
        throw InvalidArgument("append_row: expected " + std::to_string(cols_) + " columns, got " +
                              std::to_string(values.size()));
    }
    data_.insert(data_.end(), values.begin(), values.end());
    ++rows_;
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw InvalidArgument("dot: dimension mismatch (" + std::to_string(a.size()) + " vs " +
                              std::to_string(b.size()) + ")");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        acc += a[i] * b[i];
    }
    return acc;
}

double norm2(std::span<const double> a) {
    double acc = 0.0;
    for (const double x : a) {
        acc += x * x;
    }
    return std::sqrt(acc);
}

void matvec(const Matrix & w, std::span<const double> x, std::span<double> out) {
    for (std::size_t r = 0; r < w.rows(); ++r) {
        const auto wr = w.row(r);
        double acc = 0.0;
        for (std::size_t c = 0; c < wr.size(); ++c) {
            acc += wr[c] * x[c];
        }
        out[r] = acc;
    }
}

} // namespace steercal
