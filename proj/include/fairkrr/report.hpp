#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fairkrr/grid.hpp"
#include "fairkrr/selection.hpp"

namespace fairkrr {

// 64-bit FNV-1a.
std::uint64_t fnv1a64(const void* data, std::size_t size);
std::uint64_t fnv1a64_append(std::uint64_t state, const void* data, std::size_t size);

// Lower-case 16-digit hex.
std::string hex64(std::uint64_t value);

// Hash of a file's raw bytes. Throws InvalidArgument when unreadable.
std::uint64_t hash_file(const std::string& path);

// Hash of an in-memory dataset via a canonical byte serialization (dimension
// counts plus the IEEE-754 bytes of every value, in sample order).
std::uint64_t hash_samples(const std::vector<Sample>& samples);

// Shortest decimal string that round-trips the value (via to_chars). Used
// everywhere a number is printed, so reruns are byte-identical.
std::string format_double(double v);

// Per-fold results, one CSV row per outer fold in canonical order.
// Header: repetition,fold,lambda,gamma,mape,dgf,delta_hat
std::string folds_csv(const ExperimentReport& report);

// Mean per-cell conditional probabilities, K*Q rows in (k, q) row-major
// order. Header: k,q,p_hat
std::string histogram_csv(const ExperimentReport& report);

// The full experiment report as a JSON document embedding the resolved run
// configuration (passed as already-serialized JSON) and the input-data hash.
// Sorted keys, two-space indent, trailing newline; byte-identical across
// reruns of the same configuration.
std::string experiment_document(const ExperimentReport& report,
                                const std::string& resolved_config_json,
                                std::uint64_t data_hash);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace fairkrr
