#include "trajpred/encoder.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace trajpred::model {

Tensor positional_encoding(int length, int d) {
  if (d % 2 != 0) throw std::invalid_argument("positional_encoding: width must be even, got " + std::to_string(d));
  if (length < 0) throw std::invalid_argument("positional_encoding: negative length");
  Tensor pe({length, d});
  for (int pos = 0; pos < length; ++pos)
    for (int i = 0; i < d / 2; ++i) {
      double rate = std::pow(10000.0, 2.0 * i / d);
      pe.at2(pos, 2 * i) = std::sin(pos / rate);
      pe.at2(pos, 2 * i + 1) = std::cos(pos / rate);
    }
  return pe;
}

int encoder_input_channels(const ModelConfig& cfg) {
  return cfg.input_mode == InputMode::kBoth ? 4 : 2;
}

int encoder_seq_len(const ModelConfig& cfg) {
  return cfg.input_mode == InputMode::kPosition ? cfg.t_obs : cfg.t_obs - 1;
}

EncoderParams make_encoder(nn::ParamStore& ps, const ModelConfig& cfg) {
  const int d = cfg.hidden;
  const int cin = encoder_input_channels(cfg);
  EncoderParams p;
  p.conv_kernel = ps.xavier("encoder.conv.kernel", {d, cin, 3}, cin * 3, d);
  p.conv_bias = ps.zeros("encoder.conv.bias", {d});
  p.embed_mlp = nn::make_mlp2(ps, "encoder.embed", d, d, d);
  if (!cfg.no_sa) {
    for (int b = 0; b < cfg.blocks; ++b) {
      std::string prefix = "encoder.block" + std::to_string(b);
      TransformerBlockParams blk;
      blk.q = nn::make_linear(ps, prefix + ".q", d, d);
      blk.k = nn::make_linear(ps, prefix + ".k", d, d);
      blk.v = nn::make_linear(ps, prefix + ".v", d, d);
      blk.o = nn::make_linear(ps, prefix + ".o", d, d);
      blk.ln1 = nn::make_layer_norm(ps, prefix + ".ln1", d);
      blk.ln2 = nn::make_layer_norm(ps, prefix + ".ln2", d);
      blk.ff1 = nn::make_linear(ps, prefix + ".ff1", d, cfg.ff_width);
      blk.ff2 = nn::make_linear(ps, prefix + ".ff2", cfg.ff_width, d);
      p.blocks.push_back(std::move(blk));
    }
  }
  p.lstm = nn::make_lstm(ps, "encoder.lstm", d, d);
  return p;
}

ad::Var embed(const EncoderParams& p, const ad::Var& x) {
  if (x.shape().size() != 3 || x.shape()[1] < 1)
    throw std::invalid_argument("embed: expected [N, S>=1, C] input, got " +
                                shape_str(x.shape()));
  ad::Var conv = ad::conv1d(x, p.conv_kernel, p.conv_bias);
  return nn::apply_mlp2(p.embed_mlp, conv);
}

ad::Var transformer_block(const TransformerBlockParams& p, const ad::Var& x, int heads,
                          double drop_p, std::mt19937_64* rng) {
  ad::Var a = nn::apply_layer_norm(p.ln1, x);
  ad::Var attn = ad::multihead_attention(nn::apply_linear(p.q, a), nn::apply_linear(p.k, a),
                                         nn::apply_linear(p.v, a), heads);
  attn = nn::apply_linear(p.o, attn);
  if (drop_p > 0.0 && rng) attn = ad::dropout(attn, drop_p, *rng);
  ad::Var y = ad::add(x, attn);
  ad::Var f = nn::apply_layer_norm(p.ln2, y);
  ad::Var ff = nn::apply_linear(p.ff2, ad::gelu(nn::apply_linear(p.ff1, f)));
  if (drop_p > 0.0 && rng) ff = ad::dropout(ff, drop_p, *rng);
  return ad::add(y, ff);
}

EncoderState encode(const EncoderParams& p, const ModelConfig& cfg, const ad::Var& x,
                    std::mt19937_64* dropout_rng) {
  const int n = x.shape()[0];
  const int s = x.shape()[1];
  const int d = cfg.hidden;

  ad::Var seq = embed(p, x);
  if (!cfg.no_sa) {
    Tensor pe = positional_encoding(s, d);
    ad::Var flat = ad::reshape(seq, {n, s * d});
    flat = ad::add(flat, ad::constant(Tensor({s * d}, pe.vec())));
    seq = ad::reshape(flat, {n, s, d});
    for (const TransformerBlockParams& blk : p.blocks)
      seq = transformer_block(blk, seq, cfg.heads, cfg.dropout, dropout_rng);
  }

  ad::Var h = ad::constant(Tensor({n, d}));
  ad::Var c = ad::constant(Tensor({n, d}));
  for (int t = 0; t < s; ++t) {
    ad::Var xt = ad::reshape(ad::slice(seq, 1, t, 1), {n, d});
    auto [h2, c2] = nn::lstm_cell(p.lstm, xt, h, c);
    h = h2;
    c = c2;
  }
  return {h, c, seq};
}

}  // namespace trajpred::model
