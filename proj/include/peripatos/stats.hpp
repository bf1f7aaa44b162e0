#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace peripatos::stats {

/// 1-based ranks with ties given the mean of the ranks they span.
std::vector<double> average_ranks(std::span<const double> values);

double mean(std::span<const double> values);
/// Sample standard deviation (n - 1 denominator); 0 for fewer than 2 values.
double sample_sd(std::span<const double> values);
/// Standard error of the mean.
double standard_error(std::span<const double> values);

/// Two-sided tail probability of a standard normal: P(|Z| >= |z|).
double normal_two_sided_p(double z);

/// Derives a child seed from a master seed and a stream index (SplitMix64).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

}  // namespace peripatos::stats
