#include "floe/train.hpp"

#include <cstdio>
#include <sstream>

namespace floe {

namespace {

// Shortest round-trippable decimal; keeps determinism checks byte-level.
std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::string loss_curve_csv(const std::vector<EpochStats>& curve) {
    std::ostringstream os;
    os << "epoch,train_l1,train_kl,val_l1\n";
    for (const auto& e : curve) {
        os << e.epoch << "," << fmt(e.train_l1) << "," << fmt(e.train_kl) << "," << fmt(e.val_l1)
           << "\n";
    }
    return os.str();
}

}  // namespace floe
