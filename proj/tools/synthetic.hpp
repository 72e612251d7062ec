#pragma once

#include <string>
#include <vector>

#include "fedvalue/rng.hpp"
#include "fedvalue/tabular.hpp"

namespace fedvalue::tools {

/// Seeded benchmark fixture: one binary feature column per party slot plus a
/// binary label, uniform draws.
inline CategoricalTable synthetic_binary_table(std::size_t n_samples,
                                               std::size_t n_feature_columns,
                                               std::uint64_t seed) {
  CategoricalTable t;
  Rng rng(seed);
  t.sample_ids.reserve(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    t.sample_ids.push_back("s" + std::to_string(i));
  }
  for (std::size_t c = 0; c < n_feature_columns; ++c) {
    CategoricalColumn col;
    col.name = "f" + std::to_string(c);
    col.arity = 2;
    col.codes.reserve(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) {
      col.codes.push_back(static_cast<std::uint32_t>(rng.below(2)));
    }
    t.columns.push_back(std::move(col));
  }
  CategoricalColumn label;
  label.name = "y";
  label.arity = 2;
  label.codes.reserve(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    label.codes.push_back(static_cast<std::uint32_t>(rng.below(2)));
  }
  t.columns.push_back(std::move(label));
  return t;
}

}  // namespace fedvalue::tools
