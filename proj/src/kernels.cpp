#include "vsr/kernels.hpp"

#include <cstdlib>

#include "vsr/error.hpp"

namespace vsr {
namespace {

const Kernels* pick(const std::string& name) {
    if (name == "scalar") return &detail::scalar_kernels();
    if (name == "avx2") {
        const Kernels* k = detail::avx2_kernels();
        if (!k) throw ConfigError("kernel backend 'avx2' is not supported on this machine");
        return k;
    }
    if (name == "auto") {
        if (const Kernels* k = detail::avx2_kernels()) return k;
        return &detail::scalar_kernels();
    }
    throw ConfigError("unknown kernel backend '" + name + "'");
}

const Kernels* initial_backend() {
    if (const char* env = std::getenv("VSR_KERNELS")) return pick(env);
    return pick("auto");
}

const Kernels*& active() {
    static const Kernels* current = initial_backend();
    return current;
}

}  // namespace

const Kernels& kernels() { return *active(); }

void set_kernel_backend(const std::string& name) { active() = pick(name); }

std::vector<std::string> available_kernel_backends() {
    std::vector<std::string> names = {"scalar"};
    if (detail::avx2_kernels()) names.push_back("avx2");
    return names;
}

}  // namespace vsr
