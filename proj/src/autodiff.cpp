#include "jetflow/autodiff.hpp"

namespace jetflow::ad {

Tape*& active_tape() {
  thread_local Tape* tape = nullptr;
  return tape;
}

}  // namespace jetflow::ad
