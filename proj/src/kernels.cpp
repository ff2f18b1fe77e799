#include "dkroot/kernels.hpp"

#include <algorithm>

namespace dkroot::nn {

Tensor conv1d_forward(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride) {
    if (x.shape.size() != 2 || w.shape.size() != 3 || b.shape.size() != 1)
        throw std::invalid_argument("conv1d: bad rank");
    const std::size_t ci = x.dim(0), l = x.dim(1);
    const std::size_t co = w.dim(0), k = w.dim(2);
    if (w.dim(1) != ci || b.dim(0) != co) throw std::invalid_argument("conv1d: shape mismatch");
    if (k % 2 == 0) throw std::invalid_argument("conv1d: kernel size must be odd");
    const std::size_t lo = (l + stride - 1) / stride;
    const long pad = long(k / 2);

    Tensor out({co, lo});
    for (std::size_t o = 0; o < co; ++o)
        std::fill_n(&out.data[o * lo], lo, b.at(o));
    // tap offset off = j - pad; valid output range solves 0 <= t*stride + off < l
    for (std::size_t o = 0; o < co; ++o) {
        double* orow = &out.data[o * lo];
        for (std::size_t c = 0; c < ci; ++c) {
            const double* xr = &x.data[c * l];
            const double* wr = &w.data[(o * ci + c) * k];
            for (std::size_t j = 0; j < k; ++j) {
                const double wj = wr[j];
                const long off = long(j) - pad;
                const long t0 = off >= 0 ? 0 : (-off + long(stride) - 1) / long(stride);
                long t1 = (long(l) - off + long(stride) - 1) / long(stride);
                t1 = std::min(t1, long(lo));
                const double* xs = xr + off;
                for (long t = t0; t < t1; ++t) orow[t] += wj * xs[t * long(stride)];
            }
        }
    }
    return out;
}

void conv1d_backward(const Tensor& x, const Tensor& w, const Tensor& gout, std::size_t stride,
                     Tensor& gx, Tensor& gw, Tensor& gb) {
    const std::size_t ci = x.dim(0), l = x.dim(1);
    const std::size_t co = w.dim(0), k = w.dim(2);
    const std::size_t lo = gout.dim(1);
    const long pad = long(k / 2);

    for (std::size_t o = 0; o < co; ++o) {
        const double* go = &gout.data[o * lo];
        double acc = 0.0;
        for (std::size_t t = 0; t < lo; ++t) acc += go[t];
        gb.at(o) += acc;
        for (std::size_t c = 0; c < ci; ++c) {
            const double* xr = &x.data[c * l];
            double* gxr = &gx.data[c * l];
            const double* wr = &w.data[(o * ci + c) * k];
            double* gwr = &gw.data[(o * ci + c) * k];
            for (std::size_t j = 0; j < k; ++j) {
                const double wj = wr[j];
                const long off = long(j) - pad;
                const long t0 = off >= 0 ? 0 : (-off + long(stride) - 1) / long(stride);
                long t1 = (long(l) - off + long(stride) - 1) / long(stride);
                t1 = std::min(t1, long(lo));
                const double* xs = xr + off;
                double* gxs = gxr + off;
                double wacc = 0.0;
                for (long t = t0; t < t1; ++t) {
                    const double g = go[t];
                    wacc += g * xs[t * long(stride)];
                    gxs[t * long(stride)] += g * wj;
                }
                gwr[j] += wacc;
            }
        }
    }
}

Tensor dense_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.shape.size() != 1 || w.shape.size() != 2 || b.shape.size() != 1)
        throw std::invalid_argument("dense: bad rank");
    const std::size_t n = x.dim(0), p = w.dim(0);
    if (w.dim(1) != n || b.dim(0) != p) throw std::invalid_argument("dense: shape mismatch");
    Tensor out({p});
    for (std::size_t i = 0; i < p; ++i) {
        double acc = b.at(i);
        const double* wr = &w.data[i * n];
        for (std::size_t j = 0; j < n; ++j) acc += wr[j] * x.at(j);
        out.at(i) = acc;
    }
    return out;
}

void dense_backward(const Tensor& x, const Tensor& w, const Tensor& gout,
                    Tensor& gx, Tensor& gw, Tensor& gb) {
    const std::size_t n = x.dim(0), p = w.dim(0);
    for (std::size_t i = 0; i < p; ++i) {
        const double g = gout.at(i);
        gb.at(i) += g;
        const double* wr = &w.data[i * n];
        double* gwr = &gw.data[i * n];
        for (std::size_t j = 0; j < n; ++j) {
            gwr[j] += g * x.at(j);
            gx.at(j) += g * wr[j];
        }
    }
}

Tensor relu_forward(const Tensor& x) {
    Tensor out = x;
    for (double& v : out.data)
        if (v < 0.0) v = 0.0;
    return out;
}

Tensor upsample2_forward(const Tensor& x) {
    const std::size_t c = x.dim(0), l = x.dim(1);
    Tensor out({c, 2 * l});
    for (std::size_t i = 0; i < c; ++i)
        for (std::size_t t = 0; t < l; ++t) {
            out.at(i, 2 * t) = x.at(i, t);
            out.at(i, 2 * t + 1) = x.at(i, t);
        }
    return out;
}

Tensor concat_rows_forward(const Tensor& a, const Tensor& b) {
    if (a.shape.size() != 2 || b.shape.size() != 2 || a.dim(1) != b.dim(1))
        throw std::invalid_argument("concat: shape mismatch");
    Tensor out({a.dim(0) + b.dim(0), a.dim(1)});
    std::copy(a.data.begin(), a.data.end(), out.data.begin());
    std::copy(b.data.begin(), b.data.end(), out.data.begin() + long(a.data.size()));
    return out;
}

Tensor broadcast_time_forward(const Tensor& v, std::size_t l) {
    if (v.shape.size() != 1) throw std::invalid_argument("broadcast: expected vector");
    Tensor out({v.dim(0), l});
    for (std::size_t i = 0; i < v.dim(0); ++i)
        for (std::size_t t = 0; t < l; ++t) out.at(i, t) = v.at(i);
    return out;
}

}  // namespace dkroot::nn
