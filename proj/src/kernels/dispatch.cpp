#include "geomat/kernels.hpp"

#include <array>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <stdexcept>

namespace geomat::kernels {

bool avx2_supported() {
#if defined(__x86_64__) || defined(__i386__)
    return __builtin_cpu_supports("avx2");
#else
    return false;
#endif
}

const float* srgb_linear_lut() {
    static const std::array<float, 256> lut = [] {
        std::array<float, 256> t{};
        for (int c = 0; c < 256; ++c) {
            double x = c / 255.0;
            double lin = x <= 0.04045 ? x / 12.92 : std::pow((x + 0.055) / 1.055, 2.4);
            t[std::size_t(c)] = float(lin);
        }
        return t;
    }();
    return lut.data();
}

const KernelTable& active() {
    static const KernelTable& table = []() -> const KernelTable& {
        const char* env = std::getenv("GEOMAT_KERNELS");
        if (env != nullptr && std::strcmp(env, "scalar") == 0) {
            return scalar_table();
        }
        if (env != nullptr && std::strcmp(env, "avx2") == 0) {
            const KernelTable* t = avx2_table();
            if (t == nullptr || !avx2_supported()) {
                throw std::runtime_error("GEOMAT_KERNELS=avx2 but AVX2 is unavailable");
            }
            return *t;
        }
        const KernelTable* t = avx2_table();
        if (t != nullptr && avx2_supported()) {
            return *t;
        }
        return scalar_table();
    }();
    return table;
}

}  // namespace geomat::kernels
