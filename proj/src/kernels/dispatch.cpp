#include <cstdlib>
#include <string_view>

#include "agentjoule/kernels.hpp"

namespace agentjoule::kernels {

const KernelTable& active() noexcept {
  static const KernelTable& table = [] () -> const KernelTable& {
    const char* forced = std::getenv("AGENTJOULE_SIMD");
    if (forced && std::string_view(forced) == "scalar") return scalar_table();
    if (const KernelTable* t = avx2_table()) return *t;
    return scalar_table();
  }();
  return table;
}

}  // namespace agentjoule::kernels
