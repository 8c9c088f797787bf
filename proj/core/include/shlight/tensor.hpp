#pragma once

#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace shlight {

// Dense n-dimensional value container, row-major. Training runs on float;
// the gradient-check oracle instantiates the same code with double.
template <class S>
struct TensorT {
    std::vector<int> shape;
    std::vector<S> data;
    bool requires_grad = false;

    TensorT() = default;
    explicit TensorT(std::vector<int> shape_, bool requires_grad_ = false)
        : shape(std::move(shape_)), requires_grad(requires_grad_) {
        data.assign(count(shape), S(0));
    }

    static std::size_t count(const std::vector<int>& dims) {
        std::size_t n = 1;
        for (int d : dims) {
            if (d <= 0) throw std::invalid_argument("tensor dims must be positive");
            n *= static_cast<std::size_t>(d);
        }
        return n;
    }

    static TensorT from(std::vector<int> shape_, std::vector<S> values,
                        bool requires_grad_ = false) {
        TensorT t;
        t.shape = std::move(shape_);
        if (values.size() != count(t.shape))
            throw std::invalid_argument("value count does not match shape");
        t.data = std::move(values);
        t.requires_grad = requires_grad_;
        return t;
    }

    static TensorT full(std::vector<int> shape_, S value, bool requires_grad_ = false) {
        TensorT t(std::move(shape_), requires_grad_);
        for (S& v : t.data) v = value;
        return t;
    }

    std::size_t size() const { return data.size(); }
    int ndim() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

    S& operator[](std::size_t i) { return data[i]; }
    S operator[](std::size_t i) const { return data[i]; }

    std::string shape_str() const {
        std::string s = "[";
        for (std::size_t i = 0; i < shape.size(); ++i)
            s += (i ? "x" : "") + std::to_string(shape[i]);
        return s + "]";
    }

    template <class T>
    TensorT<T> cast() const {
        TensorT<T> out;
        out.shape = shape;
        out.requires_grad = requires_grad;
        out.data.resize(data.size());
        for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<T>(data[i]);
        return out;
    }
};

using Tensor = TensorT<float>;

}  // namespace shlight
