#pragma once

namespace flood {

// Worker count used by batch-parallel kernels. Kernels split work per sample
// and reduce partial results in sample order, so results do not depend on it.
void set_num_threads(int threads);
int num_threads();

}  // namespace flood
