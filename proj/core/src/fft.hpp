#pragma once

#include <complex>
#include <cstddef>

#include <fftw3.h>

namespace rotstar::detail {

// Smallest n' >= n with no prime factor above 7.
int next_fast_size(int n);

template <typename T>
class FftwArray {
public:
    explicit FftwArray(std::size_t n)
        : data_(static_cast<T*>(fftw_malloc(sizeof(T) * n))), size_(n) {
        if (data_ == nullptr) throw std::bad_alloc();
    }
    ~FftwArray() { fftw_free(data_); }
    FftwArray(const FftwArray&) = delete;
    FftwArray& operator=(const FftwArray&) = delete;

    T* data() { return data_; }
    const T* data() const { return data_; }
    std::size_t size() const { return size_; }
    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

private:
    T* data_;
    std::size_t size_;
};

// Cached FFTW_ESTIMATE plans; creation is serialised, execution uses the
// new-array interface and is safe from any thread.
fftw_plan r2c_plan(int rows, int cols);
fftw_plan c2r_plan(int rows, int cols);
fftw_plan c2c_forward_plan(int rows, int cols);

}  // namespace rotstar::detail
