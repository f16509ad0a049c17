#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "medseg/errors.hpp"

namespace medseg {

// Dense row-major float64 tensor, rank 1..4. Value semantics throughout; the
// training loops own mutable copies, everything else treats tensors as
// immutable snapshots.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<long> shape) : shape_(std::move(shape)) {
        long n = 1;
        for (long d : shape_) {
            if (d < 0) throw ArgumentError("Tensor: negative dimension");
            n *= d;
        }
        data_.assign(static_cast<size_t>(n), 0.0);
    }

    static Tensor zeros(std::vector<long> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<long> shape, double v) {
        Tensor t(std::move(shape));
        for (double& x : t.data_) x = v;
        return t;
    }

    static Tensor scalar(double v) {
        Tensor t(std::vector<long>{1});
        t.data_[0] = v;
        return t;
    }

    long ndim() const { return static_cast<long>(shape_.size()); }
    long dim(long i) const { return shape_[static_cast<size_t>(i)]; }
    long numel() const { return static_cast<long>(data_.size()); }
    const std::vector<long>& shape() const { return shape_; }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](long i) { return data_[static_cast<size_t>(i)]; }
    double operator[](long i) const { return data_[static_cast<size_t>(i)]; }

    // (B, C, H, W) indexing
    double& at4(long b, long c, long y, long x) {
        return data_[static_cast<size_t>(((b * shape_[1] + c) * shape_[2] + y) * shape_[3] + x)];
    }
    double at4(long b, long c, long y, long x) const {
        return data_[static_cast<size_t>(((b * shape_[1] + c) * shape_[2] + y) * shape_[3] + x)];
    }

    // (R, C) indexing
    double& at2(long r, long c) { return data_[static_cast<size_t>(r * shape_[1] + c)]; }
    double at2(long r, long c) const { return data_[static_cast<size_t>(r * shape_[1] + c)]; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    double min() const {
        double m = data_.empty() ? 0.0 : data_[0];
        for (double v : data_) m = v < m ? v : m;
        return m;
    }

    double max() const {
        double m = data_.empty() ? 0.0 : data_[0];
        for (double v : data_) m = v > m ? v : m;
        return m;
    }

    double sum() const {
        double s = 0.0;
        for (double v : data_) s += v;
        return s;
    }

    void fill(double v) {
        for (double& x : data_) x = v;
    }

    void add_scaled(const Tensor& o, double scale) {
        if (!same_shape(o)) throw ArgumentError("Tensor::add_scaled: shape mismatch");
        for (size_t i = 0; i < data_.size(); ++i) data_[i] += scale * o.data_[i];
    }

    bool operator==(const Tensor& o) const { return shape_ == o.shape_ && data_ == o.data_; }

private:
    std::vector<long> shape_;
    std::vector<double> data_;
};

inline std::string shape_str(const std::vector<long>& shape) {
    std::string s = "(";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + ")";
}

inline std::string shape_str(const Tensor& t) { return shape_str(t.shape()); }

}  // namespace medseg
