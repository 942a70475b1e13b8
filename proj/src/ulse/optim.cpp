#include "ulse/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace ulse::train {

Adam::Adam(const nn::ParamRefs& refs, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& r : refs) {
        m_.emplace_back(r.p->w.size(), 0.0);
        v_.emplace_back(r.p->w.size(), 0.0);
    }
}

void Adam::step(const nn::ParamRefs& refs, double lr) {
    if (refs.size() != m_.size()) throw std::invalid_argument("adam: parameter set changed");
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, double(t_));
    const double bc2 = 1.0 - std::pow(beta2_, double(t_));
    for (size_t k = 0; k < refs.size(); ++k) {
        auto& w = refs[k].p->w;
        auto& g = refs[k].p->g;
        auto& m = m_[k];
        auto& v = v_[k];
        for (size_t i = 0; i < w.size(); ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            w[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps_);
        }
    }
}

} // namespace ulse::train
