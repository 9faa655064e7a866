#include "suseg/nn/ops.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace suseg::nn {

Node* Tape::leaf(Param& p) {
    Node* n = make(p.value.shape);
    n->val = p.value;
    Param* pp = &p;
    n->back = [n, pp]() {
        float* g = pp->grad.v.data();
        const float* s = n->grad.v.data();
        for (size_t i = 0; i < pp->grad.size(); ++i) g[i] += s[i];
    };
    return n;
}

Node* Tape::input(std::array<int, 4> shape, const float* data) {
    Node* n = make(shape);
    std::memcpy(n->val.v.data(), data, n->val.size() * sizeof(float));
    return n;
}

void Tape::backward() {
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it)
        if ((*it)->back) (*it)->back();
}

namespace {

// Adds wv * (xc shifted by (dx,dy,dz), zero outside) into op. Both planes are
// (X, Y, Z) grids with x fastest.
inline void accumShifted(float* op, const float* xc, float wv, int X, int Y, int Z, int dx, int dy,
                         int dz) {
    const int x0 = std::max(0, -dx), x1 = std::min(X, X - dx);
    const int y0 = std::max(0, -dy), y1 = std::min(Y, Y - dy);
    const int z0 = std::max(0, -dz), z1 = std::min(Z, Z - dz);
    if (x1 <= x0) return;
    const int len = x1 - x0;
    for (int z = z0; z < z1; ++z)
        for (int y = y0; y < y1; ++y) {
            float* dst = op + (static_cast<size_t>(z) * Y + y) * X + x0;
            const float* src = xc + (static_cast<size_t>(z + dz) * Y + (y + dy)) * X + (x0 + dx);
            for (int i = 0; i < len; ++i) dst[i] += wv * src[i];
        }
}

// Dot product of g with xc shifted by (dx,dy,dz).
inline double dotShifted(const float* g, const float* xc, int X, int Y, int Z, int dx, int dy, int dz) {
    const int x0 = std::max(0, -dx), x1 = std::min(X, X - dx);
    const int y0 = std::max(0, -dy), y1 = std::min(Y, Y - dy);
    const int z0 = std::max(0, -dz), z1 = std::min(Z, Z - dz);
    if (x1 <= x0) return 0.0;
    const int len = x1 - x0;
    double acc = 0.0;
    for (int z = z0; z < z1; ++z)
        for (int y = y0; y < y1; ++y) {
            const float* a = g + (static_cast<size_t>(z) * Y + y) * X + x0;
            const float* b = xc + (static_cast<size_t>(z + dz) * Y + (y + dy)) * X + (x0 + dx);
            for (int i = 0; i < len; ++i) acc += static_cast<double>(a[i]) * b[i];
        }
    return acc;
}

} // namespace

Node* conv(Tape& t, Node* x, Param& w, Param& b, std::array<int, 3> ksize,
           std::array<int, 3> dilation) {
    const int C = x->val.c(), X = x->val.x(), Y = x->val.y(), Z = x->val.z();
    const int O = w.value.shape[0];
    const int KX = ksize[0], KY = ksize[1], KZ = ksize[2];
    const int K3 = KX * KY * KZ;
    if (w.value.shape[1] != C || w.value.shape[2] != K3)
        throw std::invalid_argument("conv weight shape mismatch for " + w.name);

    Node* out = t.make({O, X, Y, Z});
    const size_t sp = x->val.spatial();

    std::vector<std::array<int, 3>> taps(K3);
    for (int kt = 0; kt < K3; ++kt) {
        int kx = kt % KX, ky = (kt / KX) % KY, kz = kt / (KX * KY);
        taps[kt] = {dilation[0] * (kx - (KX - 1) / 2), dilation[1] * (ky - (KY - 1) / 2),
                    dilation[2] * (kz - (KZ - 1) / 2)};
    }

#pragma omp parallel for schedule(static)
    for (int o = 0; o < O; ++o) {
        float* op = out->val.channel(o);
        std::fill(op, op + sp, b.value.v[o]);
        for (int c = 0; c < C; ++c) {
            const float* xc = x->val.channel(c);
            const float* wo = w.value.v.data() + (static_cast<size_t>(o) * C + c) * K3;
            for (int kt = 0; kt < K3; ++kt)
                accumShifted(op, xc, wo[kt], X, Y, Z, taps[kt][0], taps[kt][1], taps[kt][2]);
        }
    }

    Param *wp = &w, *bp = &b;
    out->back = [out, x, wp, bp, taps, C, X, Y, Z, O, K3, sp]() {
        // bias and weight gradients, disjoint writes across o
#pragma omp parallel for schedule(static)
        for (int o = 0; o < O; ++o) {
            const float* go = out->grad.channel(o);
            double gb = 0.0;
            for (size_t i = 0; i < sp; ++i) gb += go[i];
            bp->grad.v[o] += static_cast<float>(gb);
            for (int c = 0; c < C; ++c) {
                const float* xc = x->val.channel(c);
                float* gw = wp->grad.v.data() + (static_cast<size_t>(o) * C + c) * K3;
                for (int kt = 0; kt < K3; ++kt)
                    gw[kt] += static_cast<float>(
                        dotShifted(go, xc, X, Y, Z, taps[kt][0], taps[kt][1], taps[kt][2]));
            }
        }
        // input gradient, disjoint writes across c
#pragma omp parallel for schedule(static)
        for (int c = 0; c < C; ++c) {
            float* gx = x->grad.channel(c);
            for (int o = 0; o < O; ++o) {
                const float* go = out->grad.channel(o);
                const float* wo = wp->value.v.data() + (static_cast<size_t>(o) * C + c) * K3;
                for (int kt = 0; kt < K3; ++kt)
                    accumShifted(gx, go, wo[kt], X, Y, Z, -taps[kt][0], -taps[kt][1], -taps[kt][2]);
            }
        }
    };
    return out;
}

Node* instance_norm(Tape& t, Node* x, Param& gamma, Param& beta, float eps) {
    const int C = x->val.c();
    const size_t sp = x->val.spatial();
    Node* out = t.make(x->val.shape);
    auto mu = std::make_shared<std::vector<float>>(C);
    auto istd = std::make_shared<std::vector<float>>(C);

#pragma omp parallel for schedule(static)
    for (int c = 0; c < C; ++c) {
        const float* xc = x->val.channel(c);
        double m = 0;
        for (size_t i = 0; i < sp; ++i) m += xc[i];
        m /= static_cast<double>(sp);
        double var = 0;
        for (size_t i = 0; i < sp; ++i) {
            double d = xc[i] - m;
            var += d * d;
        }
        var /= static_cast<double>(sp);
        (*mu)[c] = static_cast<float>(m);
        (*istd)[c] = static_cast<float>(1.0 / std::sqrt(var + eps));
        float* oc = out->val.channel(c);
        const float g = gamma.value.v[c], b = beta.value.v[c], is = (*istd)[c], mm = (*mu)[c];
        for (size_t i = 0; i < sp; ++i) oc[i] = g * (xc[i] - mm) * is + b;
    }

    Param *gp = &gamma, *bp = &beta;
    out->back = [out, x, gp, bp, mu, istd, C, sp]() {
#pragma omp parallel for schedule(static)
        for (int c = 0; c < C; ++c) {
            const float* xc = x->val.channel(c);
            const float* go = out->grad.channel(c);
            float* gx = x->grad.channel(c);
            const float is = (*istd)[c], mm = (*mu)[c], g = gp->value.v[c];
            double sg = 0, sgx = 0;
            for (size_t i = 0; i < sp; ++i) {
                float xh = (xc[i] - mm) * is;
                sg += go[i];
                sgx += static_cast<double>(go[i]) * xh;
            }
            gp->grad.v[c] += static_cast<float>(sgx);
            bp->grad.v[c] += static_cast<float>(sg);
            const float mg = static_cast<float>(sg / static_cast<double>(sp));
            const float mgx = static_cast<float>(sgx / static_cast<double>(sp));
            for (size_t i = 0; i < sp; ++i) {
                float xh = (xc[i] - mm) * is;
                gx[i] += g * is * (go[i] - mg - xh * mgx);
            }
        }
    };
    return out;
}

Node* relu(Tape& t, Node* x) {
    Node* out = t.make(x->val.shape);
    const size_t n = x->val.size();
    for (size_t i = 0; i < n; ++i) out->val.v[i] = x->val.v[i] > 0.f ? x->val.v[i] : 0.f;
    out->back = [out, x, n]() {
        for (size_t i = 0; i < n; ++i)
            if (x->val.v[i] > 0.f) x->grad.v[i] += out->grad.v[i];
    };
    return out;
}

Node* sigmoid(Tape& t, Node* x) {
    Node* out = t.make(x->val.shape);
    const size_t n = x->val.size();
    for (size_t i = 0; i < n; ++i) out->val.v[i] = 1.f / (1.f + std::exp(-x->val.v[i]));
    out->back = [out, x, n]() {
        for (size_t i = 0; i < n; ++i) {
            float y = out->val.v[i];
            x->grad.v[i] += out->grad.v[i] * y * (1.f - y);
        }
    };
    return out;
}

namespace {

struct PoolGeom {
    int C, X, Y, Z, OX, OY, OZ, fx, fy, fz;
    size_t cells() const { return static_cast<size_t>(fx) * fy * fz; }
};

PoolGeom poolGeom(const Tensor& v, std::array<int, 3> f) {
    PoolGeom g{v.c(), v.x(), v.y(), v.z(), 0, 0, 0, f[0], f[1], f[2]};
    if ((f[0] > 1 && g.X % f[0]) || (f[1] > 1 && g.Y % f[1]) || (f[2] > 1 && g.Z % f[2]))
        throw std::invalid_argument("pooled axis extent not divisible by factor");
    g.OX = g.X / f[0];
    g.OY = g.Y / f[1];
    g.OZ = g.Z / f[2];
    return g;
}

// Computes max (with argmax flat index into the input channel) and average of
// each pooling cell.
void poolCell(const float* xc, const PoolGeom& g, int ox, int oy, int oz, float& mx, size_t& arg,
              float& avg) {
    mx = -std::numeric_limits<float>::infinity();
    double sum = 0;
    arg = 0;
    for (int dz = 0; dz < g.fz; ++dz)
        for (int dy = 0; dy < g.fy; ++dy)
            for (int dx = 0; dx < g.fx; ++dx) {
                size_t i = (static_cast<size_t>(oz * g.fz + dz) * g.Y + (oy * g.fy + dy)) * g.X +
                           (ox * g.fx + dx);
                float v = xc[i];
                sum += v;
                if (v > mx) {
                    mx = v;
                    arg = i;
                }
            }
    avg = static_cast<float>(sum / static_cast<double>(g.cells()));
}

} // namespace

Node* pool(Tape& t, Node* x, PoolKind kind, std::array<int, 3> factors) {
    PoolGeom g = poolGeom(x->val, factors);
    Node* out = t.make({g.C, g.OX, g.OY, g.OZ});
    auto args = std::make_shared<std::vector<size_t>>(kind == PoolKind::Max ? out->val.size() : 0);

#pragma omp parallel for schedule(static)
    for (int c = 0; c < g.C; ++c) {
        const float* xc = x->val.channel(c);
        float* oc = out->val.channel(c);
        size_t oi = 0;
        for (int oz = 0; oz < g.OZ; ++oz)
            for (int oy = 0; oy < g.OY; ++oy)
                for (int ox = 0; ox < g.OX; ++ox, ++oi) {
                    float mx, avg;
                    size_t arg;
                    poolCell(xc, g, ox, oy, oz, mx, arg, avg);
                    if (kind == PoolKind::Max) {
                        oc[oi] = mx;
                        (*args)[c * out->val.spatial() + oi] = arg;
                    } else {
                        oc[oi] = avg;
                    }
                }
    }

    out->back = [out, x, g, kind, args]() {
        const float inv = 1.f / static_cast<float>(g.cells());
#pragma omp parallel for schedule(static)
        for (int c = 0; c < g.C; ++c) {
            float* gx = x->grad.channel(c);
            const float* go = out->grad.channel(c);
            size_t oi = 0;
            for (int oz = 0; oz < g.OZ; ++oz)
                for (int oy = 0; oy < g.OY; ++oy)
                    for (int ox = 0; ox < g.OX; ++ox, ++oi) {
                        if (kind == PoolKind::Max) {
                            gx[(*args)[c * out->val.spatial() + oi]] += go[oi];
                        } else {
                            for (int dz = 0; dz < g.fz; ++dz)
                                for (int dy = 0; dy < g.fy; ++dy)
                                    for (int dx = 0; dx < g.fx; ++dx)
                                        gx[(static_cast<size_t>(oz * g.fz + dz) * g.Y +
                                            (oy * g.fy + dy)) *
                                               g.X +
                                           (ox * g.fx + dx)] += go[oi] * inv;
                    }
                }
        }
    };
    return out;
}

Node* mixed_pool(Tape& t, Node* x, Param& alpha_raw, std::array<int, 3> factors) {
    PoolGeom g = poolGeom(x->val, factors);
    Node* out = t.make({g.C, g.OX, g.OY, g.OZ});
    const float a = 1.f / (1.f + std::exp(-alpha_raw.value.v[0]));
    auto args = std::make_shared<std::vector<size_t>>(out->val.size());
    auto maxv = std::make_shared<std::vector<float>>(out->val.size());
    auto avgv = std::make_shared<std::vector<float>>(out->val.size());

#pragma omp parallel for schedule(static)
    for (int c = 0; c < g.C; ++c) {
        const float* xc = x->val.channel(c);
        float* oc = out->val.channel(c);
        size_t base = c * out->val.spatial();
        size_t oi = 0;
        for (int oz = 0; oz < g.OZ; ++oz)
            for (int oy = 0; oy < g.OY; ++oy)
                for (int ox = 0; ox < g.OX; ++ox, ++oi) {
                    float mx, avg;
                    size_t arg;
                    poolCell(xc, g, ox, oy, oz, mx, arg, avg);
                    (*args)[base + oi] = arg;
                    (*maxv)[base + oi] = mx;
                    (*avgv)[base + oi] = avg;
                    oc[oi] = a * mx + (1.f - a) * avg;
                }
    }

    Param* ap = &alpha_raw;
    out->back = [out, x, g, a, ap, args, maxv, avgv]() {
        const float inv = 1.f / static_cast<float>(g.cells());
        double galpha = 0.0;
        for (int c = 0; c < g.C; ++c) {
            float* gx = x->grad.channel(c);
            const float* go = out->grad.channel(c);
            size_t base = c * out->val.spatial();
            size_t oi = 0;
            for (int oz = 0; oz < g.OZ; ++oz)
                for (int oy = 0; oy < g.OY; ++oy)
                    for (int ox = 0; ox < g.OX; ++ox, ++oi) {
                        const float gv = go[oi];
                        gx[(*args)[base + oi]] += a * gv;
                        const float gavg = (1.f - a) * gv * inv;
                        for (int dz = 0; dz < g.fz; ++dz)
                            for (int dy = 0; dy < g.fy; ++dy)
                                for (int dx = 0; dx < g.fx; ++dx)
                                    gx[(static_cast<size_t>(oz * g.fz + dz) * g.Y + (oy * g.fy + dy)) *
                                           g.X +
                                       (ox * g.fx + dx)] += gavg;
                        galpha += static_cast<double>(gv) * ((*maxv)[base + oi] - (*avgv)[base + oi]);
                    }
        }
        ap->grad.v[0] += static_cast<float>(galpha) * a * (1.f - a);
    };
    return out;
}

Node* upsample_linear(Tape& t, Node* x, std::array<int, 3> target) {
    const int C = x->val.c(), X = x->val.x(), Y = x->val.y(), Z = x->val.z();
    const int TX = target[0], TY = target[1], TZ = target[2];
    Node* out = t.make({C, TX, TY, TZ});

    auto axisMap = [](int ti, int T, int N, int& i0, int& i1, float& f) {
        double s = (ti + 0.5) * static_cast<double>(N) / T - 0.5;
        int fl = static_cast<int>(std::floor(s));
        f = static_cast<float>(s - fl);
        i0 = std::clamp(fl, 0, N - 1);
        i1 = std::clamp(fl + 1, 0, N - 1);
    };

#pragma omp parallel for schedule(static)
    for (int c = 0; c < C; ++c) {
        const float* xc = x->val.channel(c);
        float* oc = out->val.channel(c);
        size_t oi = 0;
        for (int tz = 0; tz < TZ; ++tz) {
            int z0, z1;
            float fz;
            axisMap(tz, TZ, Z, z0, z1, fz);
            for (int ty = 0; ty < TY; ++ty) {
                int y0, y1;
                float fy;
                axisMap(ty, TY, Y, y0, y1, fy);
                for (int tx = 0; tx < TX; ++tx, ++oi) {
                    int x0, x1;
                    float fx;
                    axisMap(tx, TX, X, x0, x1, fx);
                    auto at = [&](int a, int b, int d) {
                        return xc[(static_cast<size_t>(d) * Y + b) * X + a];
                    };
                    float c00 = at(x0, y0, z0) * (1 - fx) + at(x1, y0, z0) * fx;
                    float c10 = at(x0, y1, z0) * (1 - fx) + at(x1, y1, z0) * fx;
                    float c01 = at(x0, y0, z1) * (1 - fx) + at(x1, y0, z1) * fx;
                    float c11 = at(x0, y1, z1) * (1 - fx) + at(x1, y1, z1) * fx;
                    oc[oi] = (c00 * (1 - fy) + c10 * fy) * (1 - fz) + (c01 * (1 - fy) + c11 * fy) * fz;
                }
            }
        }
    }

    out->back = [out, x, axisMap, C, X, Y, Z, TX, TY, TZ]() {
#pragma omp parallel for schedule(static)
        for (int c = 0; c < C; ++c) {
            float* gx = x->grad.channel(c);
            const float* go = out->grad.channel(c);
            size_t oi = 0;
            for (int tz = 0; tz < TZ; ++tz) {
                int z0, z1;
                float fz;
                axisMap(tz, TZ, Z, z0, z1, fz);
                for (int ty = 0; ty < TY; ++ty) {
                    int y0, y1;
                    float fy;
                    axisMap(ty, TY, Y, y0, y1, fy);
                    for (int tx = 0; tx < TX; ++tx, ++oi) {
                        int x0, x1;
                        float fx;
                        axisMap(tx, TX, X, x0, x1, fx);
                        const float g = go[oi];
                        auto add = [&](int a, int b, int d, float w) {
                            gx[(static_cast<size_t>(d) * Y + b) * X + a] += g * w;
                        };
                        add(x0, y0, z0, (1 - fx) * (1 - fy) * (1 - fz));
                        add(x1, y0, z0, fx * (1 - fy) * (1 - fz));
                        add(x0, y1, z0, (1 - fx) * fy * (1 - fz));
                        add(x1, y1, z0, fx * fy * (1 - fz));
                        add(x0, y0, z1, (1 - fx) * (1 - fy) * fz);
                        add(x1, y0, z1, fx * (1 - fy) * fz);
                        add(x0, y1, z1, (1 - fx) * fy * fz);
                        add(x1, y1, z1, fx * fy * fz);
                    }
                }
            }
        }
    };
    return out;
}

Node* concat_channels(Tape& t, const std::vector<Node*>& xs) {
    int C = 0;
    for (Node* n : xs) C += n->val.c();
    const auto& s0 = xs.front()->val.shape;
    for (Node* n : xs)
        if (n->val.x() != s0[1] || n->val.y() != s0[2] || n->val.z() != s0[3])
            throw std::invalid_argument("concat spatial shape mismatch");
    Node* out = t.make({C, s0[1], s0[2], s0[3]});
    const size_t sp = xs.front()->val.spatial();
    size_t off = 0;
    for (Node* n : xs) {
        std::memcpy(out->val.v.data() + off, n->val.v.data(), n->val.size() * sizeof(float));
        off += n->val.size();
    }
    auto parts = std::make_shared<std::vector<Node*>>(xs);
    out->back = [out, parts, sp]() {
        (void)sp;
        size_t off = 0;
        for (Node* n : *parts) {
            const float* g = out->grad.v.data() + off;
            float* gx = n->grad.v.data();
            for (size_t i = 0; i < n->grad.size(); ++i) gx[i] += g[i];
            off += n->grad.size();
        }
    };
    return out;
}

} // namespace suseg::nn
