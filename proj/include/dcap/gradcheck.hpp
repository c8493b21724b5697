#pragma once

// Central finite-difference gradient checking. Always 64-bit: finite
// differences are not trustworthy in float.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "dcap/tensor.hpp"

namespace dcap {

// Compares the taped gradient of `f` (a scalar-valued forward pass that
// reads `x`) against central differences, element by element. Returns
// max |analytic - fd| / max(1, |fd|). `x` may be the input tensor or any
// parameter tensor referenced inside f.
inline double gradcheck(const std::function<TensorT<double>()>& f, TensorT<double>& x,
                        double eps = 1e-5) {
    const bool saved_rg = x.requires_grad;
    x.requires_grad = true;
    x.zero_grad();
    {
        Tape<double> tape;
        TensorT<double> loss = f();
        tape.backward(loss);
    }
    x.ensure_grad();
    std::vector<double> analytic(*x.grad);
    double max_rel = 0.0;
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const double saved = (*x.data)[i];
        (*x.data)[i] = saved + eps;
        const double fp = f().item();
        (*x.data)[i] = saved - eps;
        const double fm = f().item();
        (*x.data)[i] = saved;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw ValueError("gradcheck: non-finite probe at element " + std::to_string(i));
        const double fd = (fp - fm) / (2.0 * eps);
        const double rel = std::abs(analytic[i] - fd) / std::max(1.0, std::abs(fd));
        if (rel > max_rel) max_rel = rel;
    }
    x.requires_grad = saved_rg;
    x.zero_grad();
    return max_rel;
}

// Convenience overload checking f w.r.t. the tensor it consumes.
inline double gradcheck(const std::function<TensorT<double>(const TensorT<double>&)>& f,
                        TensorT<double>& x, double eps = 1e-5) {
    return gradcheck([&]() { return f(x); }, x, eps);
}

} // namespace dcap
