#pragma once

namespace uapforge {

// Element type used for training and inference. Gradient checks always run
// in double regardless of this choice.
#ifdef UAPFORGE_DOUBLE
using real = double;
#else
using real = float;
#endif

}  // namespace uapforge
