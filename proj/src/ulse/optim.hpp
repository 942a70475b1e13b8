#pragma once

#include <vector>

#include "ulse/layers.hpp"

namespace ulse::train {

class Adam {
public:
    explicit Adam(const nn::ParamRefs& refs, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8);

    void step(const nn::ParamRefs& refs, double lr);
    int64_t steps_taken() const { return t_; }

private:
    double beta1_, beta2_, eps_;
    int64_t t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

} // namespace ulse::train
