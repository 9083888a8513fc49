#pragma once
// Neumaier-compensated accumulation.  Used everywhere probabilities are
// summed: repeated m-fold convolutions amplify additive error by m per
// generation, so naive sums lose the low bits we spent the scaled
// representation to keep.

#include <cmath>

namespace drlab {

struct KahanSum {
    double s = 0.0;
    double c = 0.0;

    void add(double x) {
        double t = s + x;
        if (std::abs(s) >= std::abs(x))
            c += (s - t) + x;
        else
            c += (x - t) + s;
        s = t;
    }
    double value() const { return s + c; }
};

}  // namespace drlab
