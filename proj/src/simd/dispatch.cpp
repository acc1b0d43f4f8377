#include "drct/simd/kernels.hpp"

namespace drct::simd {

const Kernels* avx2_kernels_impl();  // defined in kernels_avx2.cpp

const Kernels* avx2_kernels_if_supported() {
#if defined(__x86_64__) || defined(_M_X64)
    if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))
        return avx2_kernels_impl();
#endif
    return nullptr;
}

const Kernels& active_kernels() {
    static const Kernels* selected = [] {
        if (const Kernels* k = avx2_kernels_if_supported()) return k;
        return &scalar_kernels();
    }();
    return *selected;
}

}  // namespace drct::simd
