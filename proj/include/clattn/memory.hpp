#pragma once

// Allocation accounting for kernel storage. Every Matrix and every kernel
// scratch buffer goes through CountingAllocator, so a caller can reset the
// peak, run a kernel, and read back the high-water mark of live bytes.

#include <atomic>
#include <cstddef>
#include <new>
#include <vector>

namespace clattn {

class AllocationStats {
 public:
  static AllocationStats& global() {
    static AllocationStats stats;
    return stats;
  }

  void on_alloc(std::size_t bytes) noexcept {
    const std::size_t now = current_.fetch_add(bytes, std::memory_order_relaxed) + bytes;
    std::size_t peak = peak_.load(std::memory_order_relaxed);
    while (now > peak &&
           !peak_.compare_exchange_weak(peak, now, std::memory_order_relaxed)) {
    }
  }

  void on_free(std::size_t bytes) noexcept {
    current_.fetch_sub(bytes, std::memory_order_relaxed);
  }

  std::size_t current() const noexcept { return current_.load(std::memory_order_relaxed); }
  std::size_t peak() const noexcept { return peak_.load(std::memory_order_relaxed); }

  // Restarts peak tracking from the currently live byte count.
  void reset_peak() noexcept { peak_.store(current(), std::memory_order_relaxed); }

 private:
  std::atomic<std::size_t> current_{0};
  std::atomic<std::size_t> peak_{0};
};

// RAII probe: peak bytes allocated on top of what was live at construction.
class PeakAllocationScope {
 public:
  PeakAllocationScope() : baseline_(AllocationStats::global().current()) {
    AllocationStats::global().reset_peak();
  }
  std::size_t peak_bytes() const noexcept {
    const std::size_t peak = AllocationStats::global().peak();
    return peak > baseline_ ? peak - baseline_ : 0;
  }

 private:
  std::size_t baseline_;
};

template <typename T>
struct CountingAllocator {
  using value_type = T;

  CountingAllocator() noexcept = default;
  template <typename U>
  CountingAllocator(const CountingAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    T* p = std::allocator<T>{}.allocate(n);
    AllocationStats::global().on_alloc(n * sizeof(T));
    return p;
  }

  void deallocate(T* p, std::size_t n) noexcept {
    AllocationStats::global().on_free(n * sizeof(T));
    std::allocator<T>{}.deallocate(p, n);
  }

  template <typename U>
  bool operator==(const CountingAllocator<U>&) const noexcept { return true; }
};

template <typename T>
using TrackedVector = std::vector<T, CountingAllocator<T>>;

}  // namespace clattn
