#pragma once

#include <cstddef>
#include <functional>

namespace epictrl {

/// Worker count: EPICTRL_THREADS when set to a positive integer, else hardware concurrency.
unsigned default_thread_count();

/// Process-wide override used by tests and the CLI; 0 restores the default.
void set_thread_count(unsigned n);
unsigned thread_count();

/// Calls body(i) for i in [0, n) across worker threads. Work is handed out dynamically,
/// so `body` must only write to state owned by index i. Rethrows the first exception.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

/// Neumaier-compensated running sum.
class CompensatedSum {
public:
    void add(double x) {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x))
            comp_ += (sum_ - t) + x;
        else
            comp_ += (x - t) + sum_;
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    static double abs(double v) { return v < 0 ? -v : v; }
    double sum_ = 0.0;
    double comp_ = 0.0;
};

} // namespace epictrl
