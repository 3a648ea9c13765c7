#pragma once

namespace fuselab {

/// Keeps freed tensor buffers on the heap instead of returning them to the
/// OS; training reallocates the same multi-megabyte buffers every step.
/// No-op outside glibc. Call once at startup.
void tune_allocator();

}  // namespace fuselab
