// Copyright (c) 2026 The encmark authors
// SPDX-License-Identifier: Apache-2.0
//
// EncoderHandle: a network plus the metadata needed to persist, reload, and
// track the provenance of an encoder (clean / watermarked / attacked-*).

#pragma once

#include "encmark/nn.hpp"
#include "encmark/shadow.hpp"

#include <string>

namespace encmark {

struct EncoderHandle {
  nn::Network network;
  std::string architecture;  // parseable id, see make_network_from_architecture
  int dim = 0;
  std::string provenance = "clean";  // clean | watermarked | attacked-*

  Matrix encode(const Matrix& x) { return network.forward(x); }
};

/// Builds a network from a textual architecture id:
///   "conv4:HxWxC:c1,c2,c3,c4:D"  — four conv/relu/pool stages + dense to D
///   "mlp:w0,w1,...,wk"           — dense stack with ReLU between layers
nn::Network make_network_from_architecture(const std::string& id,
                                           std::uint64_t seed);

/// Representation dimension implied by an architecture id.
int architecture_output_dim(const std::string& id);

/// Adapter to the query-function type used by shadow-forge and the verifier.
shadow::EncoderFn as_encoder_fn(EncoderHandle& encoder);

/// Checkpoint = binary parameter archive + JSON manifest (architecture, dim,
/// provenance, config hash, content hash over the raw parameter bytes).
void save_encoder(const EncoderHandle& encoder, const std::string& params_path,
                  const std::string& manifest_path,
                  const std::string& config_hash = "");
EncoderHandle load_encoder(const std::string& params_path,
                           const std::string& manifest_path);

}  // namespace encmark
