#pragma once

namespace tl {

/// Keeps freed tensor buffers in the heap instead of unmapping them.
/// No-op outside glibc.
void keep_heap_mapped();

}  // namespace tl
