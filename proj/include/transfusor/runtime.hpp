#pragma once

namespace transfusor {

// Keeps large freed tensor buffers in the heap instead of returning them to
// the OS after every batch (glibc only; no-op elsewhere). Call once at the
// start of a long-running program.
void tune_allocator();

}  // namespace transfusor
