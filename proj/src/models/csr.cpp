#include "gencad/models/csr.hpp"

#include "gencad/nn/loss.hpp"

namespace gencad::models {

namespace {

constexpr int kMaskedIndex = kNumLevels;  // embedding row for inactive slots

}  // namespace

CsrConfig CsrConfig::from(const Config& cfg, const std::string& p) {
  CsrConfig c;
  c.d_z = cfg.get(p + "d_z", c.d_z);
  c.d_model = cfg.get(p + "d_model", c.d_z);
  c.enc_layers = cfg.get(p + "enc_layers", c.enc_layers);
  c.dec_layers = cfg.get(p + "dec_layers", c.dec_layers);
  c.heads = cfg.get(p + "heads", c.heads);
  c.ffn_dim = cfg.get(p + "ffn_dim", c.ffn_dim);
  c.dropout = cfg.get(p + "dropout", c.dropout);
  c.seq_len = cfg.get(p + "seq_len", c.seq_len);
  c.level_embed = cfg.get(p + "level_embed", c.level_embed);
  c.beta = cfg.get(p + "beta", c.beta);
  c.seed = cfg.get(p + "seed", c.seed);
  return c;
}

void CsrConfig::write(Config& cfg, const std::string& p) const {
  cfg.set(p + "d_z", d_z, "full scale: 256");
  cfg.set(p + "d_model", d_model, "full scale: 256");
  cfg.set(p + "enc_layers", enc_layers, "full scale: 4");
  cfg.set(p + "dec_layers", dec_layers, "full scale: 4");
  cfg.set(p + "heads", heads, "full scale: 8");
  cfg.set(p + "ffn_dim", ffn_dim, "full scale: 512");
  cfg.set(p + "dropout", dropout, "full scale: 0.1");
  cfg.set(p + "seq_len", seq_len);
  cfg.set(p + "level_embed", level_embed);
  cfg.set(p + "beta", beta);
  cfg.set(p + "seed", seed);
}

template <class T>
CsrModel<T>::CsrModel(const CsrConfig& config) : config_(config) {
  Rng rng(config.seed);
  const int d = config.d_model;
  type_emb_ = nn::Embedding<T>(kNumCommandTypes, d, rng);
  level_emb_ = nn::Embedding<T>(kNumLevels + 1, config.level_embed, rng);
  param_proj_ = nn::Linear<T>(kNumParams * config.level_embed, d, rng);
  for (int i = 0; i < config.enc_layers; ++i) {
    encoder_.emplace_back(d, config.heads, config.ffn_dim, config.dropout, true, rng);
  }
  enc_norm_ = nn::LayerNorm<T>(d);
  to_latent_ = nn::Linear<T>(d, config.d_z, rng);

  queries_.resize(config.seq_len, d);
  for (Eigen::Index i = 0; i < queries_.value.size(); ++i) queries_.value.data()[i] = static_cast<T>(0.02 * rng.normal());
  from_latent_ = nn::Linear<T>(config.d_z, d, rng);
  for (int i = 0; i < config.dec_layers; ++i) {
    decoder_.emplace_back(d, config.heads, config.ffn_dim, config.dropout, true, rng);
  }
  dec_norm_ = nn::LayerNorm<T>(d);
  type_head_ = nn::Linear<T>(d, kNumCommandTypes, rng);
  level_w_.resize(d, kNumParams * kNumLevels);
  level_b_.resize(1, kNumParams * kNumLevels);
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  for (Eigen::Index i = 0; i < level_w_.value.size(); ++i) {
    level_w_.value.data()[i] = static_cast<T>(rng.uniform(-bound, bound));
  }
  pe_ = nn::sinusoidal_pe<T>(config.seq_len, d);
}

template <class T>
Mat<T> CsrModel<T>::embed(const std::vector<EncodedSequence>& batch) {
  const int n = config_.seq_len;
  batch_ = static_cast<int>(batch.size());
  lengths_.clear();
  std::vector<int> types;
  std::vector<int> levels;
  types.reserve(static_cast<std::size_t>(batch_ * n));
  levels.reserve(static_cast<std::size_t>(batch_ * n * kNumParams));
  for (const auto& seq : batch) {
    if (static_cast<int>(seq.size()) != n) {
      throw ShapeError("CSR expects sequences of " + std::to_string(n) + " rows, got " + std::to_string(seq.size()));
    }
    lengths_.push_back(program_length(seq));
    for (const auto& row : seq) {
      if (row[0] >= kNumCommandTypes) throw ShapeError("CSR input: invalid token " + std::to_string(row[0]));
      types.push_back(row[0]);
      const auto layout = layout_of(static_cast<CommandType>(row[0]));
      for (int s = 0; s < kNumParams; ++s) {
        levels.push_back(layout.active.test(static_cast<std::size_t>(s)) ? row[static_cast<std::size_t>(1 + s)]
                                                                        : kMaskedIndex);
      }
    }
  }
  Mat<T> x = type_emb_.forward(types);
  const Mat<T> lv = level_emb_.forward(levels);
  const Eigen::Map<const Mat<T>> flat(lv.data(), static_cast<Eigen::Index>(batch_) * n,
                                      static_cast<Eigen::Index>(kNumParams) * config_.level_embed);
  x += param_proj_.forward(flat);
  for (int b = 0; b < batch_; ++b) x.middleRows(static_cast<Eigen::Index>(b) * n, n) += pe_;
  return x;
}

template <class T>
void CsrModel<T>::embed_backward(const Mat<T>& dx) {
  type_emb_.backward(dx);
  const Mat<T> dflat = param_proj_.backward(dx);
  const Eigen::Map<const Mat<T>> dlv(dflat.data(), dflat.rows() * kNumParams, config_.level_embed);
  level_emb_.backward(dlv);
}

template <class T>
Mat<T> CsrModel<T>::encoder_states(const std::vector<EncodedSequence>& batch) {
  Mat<T> x = embed(batch);
  for (auto& block : encoder_) x = block.forward(x, config_.seq_len);
  return enc_norm_.forward(x);
}

template <class T>
Mat<T> CsrModel<T>::encode(const std::vector<EncodedSequence>& batch) {
  const Mat<T> h = encoder_states(batch);
  const int n = config_.seq_len;
  Mat<T> pooled(batch_, config_.d_model);
  for (int b = 0; b < batch_; ++b) {
    const int len = lengths_[static_cast<std::size_t>(b)];
    pooled.row(b) = h.middleRows(static_cast<Eigen::Index>(b) * n, len).colwise().mean();
  }
  return squash_.forward(to_latent_.forward(pooled));
}

template <class T>
void CsrModel<T>::encode_backward(const Mat<T>& dz) {
  const Mat<T> dpooled = to_latent_.backward(squash_.backward(dz));
  const int n = config_.seq_len;
  Mat<T> dh = Mat<T>::Zero(static_cast<Eigen::Index>(batch_) * n, config_.d_model);
  for (int b = 0; b < batch_; ++b) {
    const int len = lengths_[static_cast<std::size_t>(b)];
    dh.middleRows(static_cast<Eigen::Index>(b) * n, len).rowwise() = dpooled.row(b) / static_cast<T>(len);
  }
  Mat<T> dx = enc_norm_.backward(dh);
  for (auto it = encoder_.rbegin(); it != encoder_.rend(); ++it) dx = it->backward(dx);
  embed_backward(dx);
}

template <class T>
Mat<T> CsrModel<T>::decode_states(const Mat<T>& z) {
  nn::expect_cols(z, config_.d_z, "CSR decoder latent");
  const int n = config_.seq_len;
  const auto b_count = z.rows();
  const Mat<T> zp = from_latent_.forward(z);
  const Mat<T> base = queries_.value + pe_;
  Mat<T> x(b_count * n, config_.d_model);
  for (Eigen::Index b = 0; b < b_count; ++b) {
    x.middleRows(b * n, n) = base;
    x.middleRows(b * n, n).rowwise() += zp.row(b);
  }
  for (auto& block : decoder_) x = block.forward(x, n);
  return dec_norm_.forward(x);
}

template <class T>
void CsrModel<T>::decode_states_backward(const Mat<T>& dh, Mat<T>& dz) {
  const int n = config_.seq_len;
  Mat<T> dx = dec_norm_.backward(dh);
  for (auto it = decoder_.rbegin(); it != decoder_.rend(); ++it) dx = it->backward(dx);
  const Eigen::Index b_count = dx.rows() / n;
  Mat<T> dzp(b_count, config_.d_model);
  for (Eigen::Index b = 0; b < b_count; ++b) {
    queries_.grad += dx.middleRows(b * n, n);
    dzp.row(b) = dx.middleRows(b * n, n).colwise().sum();
  }
  dz = from_latent_.backward(dzp);
}

template <class T>
Mat<T> CsrModel<T>::logits(const Mat<T>& z) {
  const Mat<T> h = decode_states(z);
  Mat<T> out(h.rows(), kNumCommandTypes + kNumParams * kNumLevels);
  out.leftCols(kNumCommandTypes) = type_head_.forward(h);
  Mat<T> lv = h * level_w_.value;
  lv.rowwise() += level_b_.value.row(0);
  out.rightCols(kNumParams * kNumLevels) = lv;
  return out;
}

template <class T>
std::vector<EncodedSequence> CsrModel<T>::greedy_decode(const Mat<T>& z) {
  const Mat<T> all = logits(z);
  const int n = config_.seq_len;
  const auto& table = slot_table();
  std::vector<EncodedSequence> out;
  for (Eigen::Index b = 0; b < z.rows(); ++b) {
    EncodedSequence seq;
    seq.reserve(static_cast<std::size_t>(n));
    seq.push_back(encode_command(CadCommand::sol()));
    for (int i = 0; i + 1 < n; ++i) {
      const auto row = all.row(b * n + i);
      Eigen::Index type = 0;
      row.head(kNumCommandTypes).maxCoeff(&type);
      EncodedRow enc{};
      enc.fill(kMaskLevel);
      enc[0] = static_cast<std::uint8_t>(type);
      const auto layout = layout_of(static_cast<CommandType>(type));
      for (int s = 0; s < kNumParams; ++s) {
        if (!layout.active.test(static_cast<std::size_t>(s))) continue;
        const auto& spec = table[static_cast<std::size_t>(s)];
        const int card = spec.kind == SlotKind::Discrete ? spec.cardinality : kNumLevels;
        Eigen::Index level = 0;
        row.segment(kNumCommandTypes + s * kNumLevels, card).maxCoeff(&level);
        enc[static_cast<std::size_t>(1 + s)] = static_cast<std::uint8_t>(level);
      }
      seq.push_back(enc);
    }
    out.push_back(std::move(seq));
  }
  return out;
}

template <class T>
EncodedSequence CsrModel<T>::shift_targets(const EncodedSequence& seq) {
  EncodedSequence t(seq.size(), eos_row());
  for (std::size_t i = 0; i + 1 < seq.size(); ++i) t[i] = seq[i + 1];
  return t;
}

template <class T>
CsrLossParts CsrModel<T>::loss_forward(const std::vector<EncodedSequence>& batch) {
  const Mat<T> z = encode(batch);
  dec_h_ = decode_states(z);
  const int n = config_.seq_len;
  type_targets_.assign(static_cast<std::size_t>(batch_) * n, 0);
  slot_rows_.assign(kNumParams, SlotRows{});
  for (int b = 0; b < batch_; ++b) {
    const auto target = shift_targets(batch[static_cast<std::size_t>(b)]);
    for (int i = 0; i < n; ++i) {
      const auto& row = target[static_cast<std::size_t>(i)];
      const int r = b * n + i;
      type_targets_[static_cast<std::size_t>(r)] = row[0];
      const auto layout = layout_of(static_cast<CommandType>(row[0]));
      for (int s = 0; s < kNumParams; ++s) {
        if (!layout.active.test(static_cast<std::size_t>(s))) continue;
        slot_rows_[static_cast<std::size_t>(s)].rows.push_back(r);
        slot_rows_[static_cast<std::size_t>(s)].targets.push_back(row[static_cast<std::size_t>(1 + s)]);
      }
    }
  }
  CsrLossParts parts;
  type_logits_ = type_head_.forward(dec_h_);
  parts.type = nn::cross_entropy<T>(type_logits_, type_targets_) / batch_;
  double param = 0.0;
  for (int s = 0; s < kNumParams; ++s) {
    auto& sr = slot_rows_[static_cast<std::size_t>(s)];
    if (sr.rows.empty()) continue;
    Mat<T> x(static_cast<Eigen::Index>(sr.rows.size()), config_.d_model);
    for (std::size_t k = 0; k < sr.rows.size(); ++k) x.row(static_cast<Eigen::Index>(k)) = dec_h_.row(sr.rows[k]);
    sr.logits = x * level_w_.value.middleCols(s * kNumLevels, kNumLevels);
    sr.logits.rowwise() += level_b_.value.row(0).segment(s * kNumLevels, kNumLevels);
    param += nn::cross_entropy<T>(sr.logits, sr.targets);
  }
  parts.param = param / batch_;
  parts.total = parts.type + config_.beta * parts.param;
  return parts;
}

template <class T>
void CsrModel<T>::loss_backward(double scale) {
  const double s_type = scale / batch_;
  const double s_param = scale * config_.beta / batch_;
  Mat<T> dlogits;
  nn::cross_entropy<T>(type_logits_, type_targets_, &dlogits, s_type);
  Mat<T> dh = type_head_.backward(dlogits);
  for (int s = 0; s < kNumParams; ++s) {
    auto& sr = slot_rows_[static_cast<std::size_t>(s)];
    if (sr.rows.empty()) continue;
    Mat<T> g;
    nn::cross_entropy<T>(sr.logits, sr.targets, &g, s_param);
    Mat<T> x(static_cast<Eigen::Index>(sr.rows.size()), config_.d_model);
    for (std::size_t k = 0; k < sr.rows.size(); ++k) x.row(static_cast<Eigen::Index>(k)) = dec_h_.row(sr.rows[k]);
    level_w_.grad.middleCols(s * kNumLevels, kNumLevels).noalias() += x.transpose() * g;
    level_b_.grad.row(0).segment(s * kNumLevels, kNumLevels) += g.colwise().sum();
    const Mat<T> dx = g * level_w_.value.middleCols(s * kNumLevels, kNumLevels).transpose();
    for (std::size_t k = 0; k < sr.rows.size(); ++k) dh.row(sr.rows[k]) += dx.row(static_cast<Eigen::Index>(k));
  }
  Mat<T> dz;
  decode_states_backward(dh, dz);
  encode_backward(dz);
}

template <class T>
void CsrModel<T>::visit(const std::string& prefix, const typename nn::Module<T>::Visitor& fn) {
  type_emb_.visit(this->join(prefix, "type_emb"), fn);
  level_emb_.visit(this->join(prefix, "level_emb"), fn);
  param_proj_.visit(this->join(prefix, "param_proj"), fn);
  for (std::size_t i = 0; i < encoder_.size(); ++i) encoder_[i].visit(this->join(prefix, "enc" + std::to_string(i)), fn);
  enc_norm_.visit(this->join(prefix, "enc_norm"), fn);
  to_latent_.visit(this->join(prefix, "to_latent"), fn);
  fn(this->join(prefix, "queries"), queries_);
  from_latent_.visit(this->join(prefix, "from_latent"), fn);
  for (std::size_t i = 0; i < decoder_.size(); ++i) decoder_[i].visit(this->join(prefix, "dec" + std::to_string(i)), fn);
  dec_norm_.visit(this->join(prefix, "dec_norm"), fn);
  type_head_.visit(this->join(prefix, "type_head"), fn);
  fn(this->join(prefix, "level_head.weight"), level_w_);
  fn(this->join(prefix, "level_head.bias"), level_b_);
}

template <class T>
void CsrModel<T>::set_training(bool t) {
  nn::Module<T>::set_training(t);
  for (auto& b : encoder_) b.set_training(t);
  for (auto& b : decoder_) b.set_training(t);
}

template class CsrModel<float>;
template class CsrModel<double>;

}  // namespace gencad::models
