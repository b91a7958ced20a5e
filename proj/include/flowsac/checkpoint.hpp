#pragma once

#include <cstddef>
#include <string>
#include <variant>

#include "flowsac/flow.hpp"
#include "flowsac/linalg.hpp"

namespace flowsac {

// Checkpoints are a small JSON document: a header with the format name,
// version, policy kind and episode, plus every tensor as base64-encoded
// little-endian float64 bytes.  Two kinds exist: "flow" stores a velocity
// network, "gaussian" stores an explicit linear policy u = -K x + xi,
// xi ~ N(0, sigma) (used to inject reference policies into evaluation).

struct GaussianCheckpointData {
  Matrix K;      // action_dim x state_dim gain
  Matrix sigma;  // action_dim x action_dim covariance
};

struct Checkpoint {
  std::size_t episode = 0;
  std::variant<FlowPolicy, GaussianCheckpointData> policy;
};

void save_flow_checkpoint(const std::string& path, const FlowPolicy& policy,
                          std::size_t episode);

void save_gaussian_checkpoint(const std::string& path, const Matrix& K,
                              const Matrix& sigma, std::size_t episode);

// Reads either kind back; the flow network is shape-validated and the
// gaussian matrices dimension-checked.  Unreadable files, foreign formats,
// and corrupt payloads raise io_error.
Checkpoint load_checkpoint(const std::string& path);

// Exposed for tests: RFC 4648 base64 of raw bytes, and doubles packed as
// 8 little-endian bytes each.
std::string base64_encode(const unsigned char* bytes, std::size_t n);
std::vector<unsigned char> base64_decode(const std::string& text);
std::string encode_doubles(const double* values, std::size_t n);
std::vector<double> decode_doubles(const std::string& text);

}  // namespace flowsac
