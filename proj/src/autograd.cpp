#include "mrt/autograd.hpp"

namespace mrt {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() noexcept { return g_grad_enabled; }
void set_grad_enabled(bool enabled) noexcept { g_grad_enabled = enabled; }

}  // namespace mrt
