#pragma once

#include <atomic>
#include <cstddef>
#include <memory>
#include <new>
#include <vector>

namespace ascan {

// Process-wide accounting of bytes held by tensor storage.
struct MemoryStats {
  static std::size_t current_bytes();
  static std::size_t peak_bytes();
  /// Resets the peak to the current live size.
  static void reset_peak();

  static void on_allocate(std::size_t bytes);
  static void on_release(std::size_t bytes);
};

template <typename T>
struct TrackingAllocator {
  using value_type = T;

  TrackingAllocator() = default;
  template <typename U>
  TrackingAllocator(const TrackingAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    T* p = std::allocator<T>{}.allocate(n);
    MemoryStats::on_allocate(n * sizeof(T));
    return p;
  }
  void deallocate(T* p, std::size_t n) noexcept {
    MemoryStats::on_release(n * sizeof(T));
    std::allocator<T>{}.deallocate(p, n);
  }

  template <typename U>
  bool operator==(const TrackingAllocator<U>&) const noexcept {
    return true;
  }
};

template <typename T>
using TrackedVector = std::vector<T, TrackingAllocator<T>>;

}  // namespace ascan
