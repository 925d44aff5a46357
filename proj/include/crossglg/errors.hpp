#pragma once

#include <stdexcept>
#include <string>

namespace crossglg {

/// Malformed or inconsistent input data (dataset records, topologies, files).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Problems with action descriptions, key-joint extraction or text embeddings.
class TextError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid model, training or evaluation configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace crossglg
