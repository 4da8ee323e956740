#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace deepcat {

struct GradientSuiteConfig {
  int num_categories = 5;
  int embed_dim = 8;
  int vocab_size = 20;
  int heads = 2;
  int attn_dim = 4;
  int batch = 3;
  /// Random points per primitive.
  int points = 10;
  double eps = 1e-5;
  double tolerance = 1e-4;
  std::uint64_t seed = 7;
  /// Name of one component whose backward rule is deliberately corrupted
  /// (negative control). Empty for a normal run.
  std::string inject_bug;
};

struct GradientCheckEntry {
  std::string component;
  double max_rel_error = 0.0;
  bool passed = false;
};

struct GradientCheckReport {
  double tolerance = 0.0;
  double seconds = 0.0;
  std::vector<GradientCheckEntry> entries;

  bool all_passed() const;
  double worst() const;
  std::vector<std::string> failures() const;
};

/// Finite-difference check of every primitive, every loss (both co-occurrence
/// modes), each model building block and the composed model.
GradientCheckReport gradient_check_suite(const GradientSuiteConfig& cfg);

/// Component names the suite checks, in report order.
std::vector<std::string> gradient_suite_components();

}  // namespace deepcat
