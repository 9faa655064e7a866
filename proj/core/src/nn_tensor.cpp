#include "suseg/nn/tensor.hpp"

#include <cmath>

namespace suseg::nn {

void Adam::step(ParamStore& store) {
    ++t_;
    const float bc1 = 1.f - std::pow(cfg_.beta1, static_cast<float>(t_));
    const float bc2 = 1.f - std::pow(cfg_.beta2, static_cast<float>(t_));
    for (auto& p : store.all()) {
        float* w = p->value.v.data();
        float* g = p->grad.v.data();
        float* m = p->adam_m.v.data();
        float* v = p->adam_v.v.data();
        const size_t n = p->value.size();
        for (size_t i = 0; i < n; ++i) {
            m[i] = cfg_.beta1 * m[i] + (1.f - cfg_.beta1) * g[i];
            v[i] = cfg_.beta2 * v[i] + (1.f - cfg_.beta2) * g[i] * g[i];
            float mh = m[i] / bc1;
            float vh = v[i] / bc2;
            w[i] -= cfg_.lr * mh / (std::sqrt(vh) + cfg_.eps);
        }
    }
}

} // namespace suseg::nn
