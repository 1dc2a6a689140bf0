#pragma once

#include <random>
#include <vector>

#include "trajpred/config.hpp"
#include "trajpred/nn.hpp"

namespace trajpred::model {

// Sinusoidal encoding: PE[pos, 2i] = sin(pos / 10000^(2i/d)),
// PE[pos, 2i+1] = cos(pos / 10000^(2i/d)). d must be even.
Tensor positional_encoding(int length, int d);

struct TransformerBlockParams {
  nn::LinearParams q, k, v, o;
  nn::LayerNormParams ln1, ln2;
  nn::LinearParams ff1, ff2;
};

struct EncoderParams {
  ad::Var conv_kernel, conv_bias;
  nn::Mlp2 embed_mlp;
  std::vector<TransformerBlockParams> blocks;
  nn::LstmParams lstm;
};

int encoder_input_channels(const ModelConfig& cfg);
int encoder_seq_len(const ModelConfig& cfg);
EncoderParams make_encoder(nn::ParamStore& ps, const ModelConfig& cfg);

// Conv1D along time followed by a position-wise 2-layer MLP; preserves the
// sequence length. x: [N, S, C] -> [N, S, D].
ad::Var embed(const EncoderParams& p, const ad::Var& x);

// Pre-norm self-attention block with residual connections.
ad::Var transformer_block(const TransformerBlockParams& p, const ad::Var& x, int heads,
                          double drop_p = 0.0, std::mt19937_64* rng = nullptr);

struct EncoderState {
  ad::Var h;    // [N, D] final LSTM hidden states
  ad::Var c;    // [N, D] final LSTM cell states
  ad::Var seq;  // [N, S, D] features entering the LSTM
};

// Per-agent temporal encoding; agents never mix here. With no_sa the
// transformer stack (and its positional encoding) is skipped and the embedded
// sequence feeds the LSTM directly.
EncoderState encode(const EncoderParams& p, const ModelConfig& cfg, const ad::Var& x,
                    std::mt19937_64* dropout_rng = nullptr);

}  // namespace trajpred::model
