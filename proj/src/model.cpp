#include "qv/model.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>

#include <json.hpp>

namespace qv {

const char* to_string(Arch a) {
  switch (a) {
    case Arch::cnn: return "cnn";
    case Arch::qv_cnn: return "qv_cnn";
    case Arch::vit: return "vit";
    default: return "qv_vit";
  }
}

Arch arch_from_string(const std::string& s) {
  if (s == "cnn") return Arch::cnn;
  if (s == "qv_cnn" || s == "qv-cnn") return Arch::qv_cnn;
  if (s == "vit") return Arch::vit;
  if (s == "qv_vit" || s == "qv-vit") return Arch::qv_vit;
  throw ContractError("unknown arch '" + s + "' (expected cnn, qv-cnn, vit, or qv-vit)");
}

const char* to_string(TokenMode m) { return m == TokenMode::patch ? "patch" : "channel"; }

TokenMode token_mode_from_string(const std::string& s) {
  if (s == "patch") return TokenMode::patch;
  if (s == "channel") return TokenMode::channel;
  throw ContractError("unknown token mode '" + s + "' (expected patch or channel)");
}

void ModelConfig::validate() const {
  if (classes != 2) throw ContractError("model: only two classes are supported");
  if (in_channels < 1 || in_h < 1 || in_w < 1) throw ContractError("model: bad input dims");
  if (static_cast<int>(cnn_channels.size()) != 6)
    throw ContractError("model: cnn_channels must list six layer widths");
  if (cnn_kernel < 1 || cnn_kernel % 2 == 0) throw ContractError("model: cnn kernel must be odd");
  if (is_vit()) {
    if (vit_embed_dim % vit_heads != 0)
      throw ContractError("model: vit embed dim must be divisible by the head count");
    if (token_mode == TokenMode::patch && (in_h % vit_patch != 0 || in_w % vit_patch != 0))
      throw ContractError("model: input dims must be divisible by the patch size");
    if (vit_layers < 1 || vit_heads < 1 || vit_patch < 1 || vit_embed_dim < 1 || vit_mlp_dim < 1)
      throw ContractError("model: vit dims must be >= 1");
  }
  if (uses_qv()) qv.validate();
}

std::string ModelConfig::to_json() const {
  nlohmann::ordered_json j;
  j["arch"] = to_string(arch);
  j["classes"] = classes;
  j["in_channels"] = in_channels;
  j["in_h"] = in_h;
  j["in_w"] = in_w;
  j["seed"] = seed;
  j["cnn_channels"] = cnn_channels;
  j["cnn_kernel"] = cnn_kernel;
  j["vit_layers"] = vit_layers;
  j["vit_heads"] = vit_heads;
  j["vit_patch"] = vit_patch;
  j["vit_embed_dim"] = vit_embed_dim;
  j["vit_mlp_dim"] = vit_mlp_dim;
  j["token_mode"] = to_string(token_mode);
  j["qv"] = {{"shifts", qv.shifts},
             {"filters", qv.filters},
             {"depth", qv.depth},
             {"kernel", qv.kernel}};
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model config json: ") + e.what());
  }
  ModelConfig c;
  c.arch = arch_from_string(j.at("arch").get<std::string>());
  c.classes = j.at("classes").get<int>();
  c.in_channels = j.at("in_channels").get<int>();
  c.in_h = j.at("in_h").get<int>();
  c.in_w = j.at("in_w").get<int>();
  c.seed = j.at("seed").get<uint64_t>();
  c.cnn_channels = j.at("cnn_channels").get<std::vector<int>>();
  c.cnn_kernel = j.at("cnn_kernel").get<int>();
  c.vit_layers = j.at("vit_layers").get<int>();
  c.vit_heads = j.at("vit_heads").get<int>();
  c.vit_patch = j.at("vit_patch").get<int>();
  c.vit_embed_dim = j.at("vit_embed_dim").get<int>();
  c.vit_mlp_dim = j.at("vit_mlp_dim").get<int>();
  c.token_mode = token_mode_from_string(j.at("token_mode").get<std::string>());
  c.qv.shifts = j.at("qv").at("shifts").get<std::vector<int>>();
  c.qv.filters = j.at("qv").at("filters").get<int>();
  c.qv.depth = j.at("qv").at("depth").get<int>();
  c.qv.kernel = j.at("qv").at("kernel").get<int>();
  c.qv.in_channels = c.in_channels;
  return c;
}

// ---------------------------------------------------------------------------
// Token ops
// ---------------------------------------------------------------------------

std::vector<float> patchify_image(const std::vector<float>& chw, int c, int h, int w, int p) {
  const int gy = h / p, gx = w / p;
  std::vector<float> out(static_cast<size_t>(gy) * gx * c * p * p);
  for (int py = 0; py < gy; ++py)
    for (int px = 0; px < gx; ++px)
      for (int ci = 0; ci < c; ++ci)
        for (int dy = 0; dy < p; ++dy)
          for (int dx = 0; dx < p; ++dx) {
            const size_t src =
                (static_cast<size_t>(ci) * h + (py * p + dy)) * w + (px * p + dx);
            const size_t dst = (static_cast<size_t>(py) * gx + px) * (c * p * p) +
                               (static_cast<size_t>(ci) * p + dy) * p + dx;
            out[dst] = chw[src];
          }
  return out;
}

std::vector<float> unpatchify_image(const std::vector<float>& tokens, int c, int h, int w, int p) {
  const int gy = h / p, gx = w / p;
  std::vector<float> out(static_cast<size_t>(c) * h * w);
  for (int py = 0; py < gy; ++py)
    for (int px = 0; px < gx; ++px)
      for (int ci = 0; ci < c; ++ci)
        for (int dy = 0; dy < p; ++dy)
          for (int dx = 0; dx < p; ++dx) {
            const size_t dst =
                (static_cast<size_t>(ci) * h + (py * p + dy)) * w + (px * p + dx);
            const size_t src = (static_cast<size_t>(py) * gx + px) * (c * p * p) +
                               (static_cast<size_t>(ci) * p + dy) * p + dx;
            out[dst] = tokens[src];
          }
  return out;
}

namespace {

// [N,C,H,W] -> [N, (H/p)*(W/p), C*p*p]; a pure index permutation.
Tensor patchify_op(const Tensor& x, int p) {
  const int n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  const int gy = h / p, gx = w / p;
  const int nt = gy * gx, td = c * p * p;
  const int64_t per = static_cast<int64_t>(c) * h * w;
  std::vector<float> out(static_cast<int64_t>(n) * nt * td);
  for (int b = 0; b < n; ++b) {
    const auto tok = patchify_image(
        std::vector<float>(x.values().begin() + b * per, x.values().begin() + (b + 1) * per), c,
        h, w, p);
    std::copy(tok.begin(), tok.end(), out.begin() + static_cast<int64_t>(b) * nt * td);
  }
  auto xn = x.node();
  return qv::detail::make_op<float>(
      {n, nt, td}, std::move(out), {x}, [xn, n, c, h, w, p, nt, td](Tensor::Node& self) {
        if (!xn->needs_grad) return;
        const int64_t per = static_cast<int64_t>(c) * h * w;
        for (int b = 0; b < n; ++b) {
          const auto img = unpatchify_image(
              std::vector<float>(self.grad.begin() + static_cast<int64_t>(b) * nt * td,
                                 self.grad.begin() + static_cast<int64_t>(b + 1) * nt * td),
              c, h, w, p);
          float* dst = xn->grad.data() + b * per;
          for (int64_t i = 0; i < per; ++i) dst[i] += img[i];
        }
      });
}

// [D] -> [N,1,D] (learned class token broadcast over the batch).
Tensor expand_token(const Tensor& t, int n) {
  const int d = static_cast<int>(t.size());
  std::vector<float> out(static_cast<int64_t>(n) * d);
  for (int b = 0; b < n; ++b)
    std::copy(t.values().begin(), t.values().end(), out.begin() + static_cast<int64_t>(b) * d);
  auto tn = t.node();
  return qv::detail::make_op<float>({n, 1, d}, std::move(out), {t},
                                    [tn, n, d](Tensor::Node& self) {
                                      if (!tn->needs_grad) return;
                                      for (int b = 0; b < n; ++b)
                                        for (int i = 0; i < d; ++i)
                                          tn->grad[i] += self.grad[static_cast<int64_t>(b) * d + i];
                                    });
}

// [N,T,D] -> [N,D], picking one token.
Tensor slice_token(const Tensor& x, int token) {
  const int n = x.shape()[0], t = x.shape()[1], d = x.shape()[2];
  std::vector<float> out(static_cast<int64_t>(n) * d);
  for (int b = 0; b < n; ++b)
    std::copy_n(x.values().begin() + (static_cast<int64_t>(b) * t + token) * d, d,
                out.begin() + static_cast<int64_t>(b) * d);
  auto xn = x.node();
  return qv::detail::make_op<float>(
      {n, d}, std::move(out), {x}, [xn, n, t, d, token](Tensor::Node& self) {
        if (!xn->needs_grad) return;
        for (int b = 0; b < n; ++b) {
          float* dst = xn->grad.data() + (static_cast<int64_t>(b) * t + token) * d;
          for (int i = 0; i < d; ++i) dst[i] += self.grad[static_cast<int64_t>(b) * d + i];
        }
      });
}

// ---------------------------------------------------------------------------
// Architectures
// ---------------------------------------------------------------------------

class CnnModel : public Model {
 public:
  explicit CnnModel(const ModelConfig& cfg) : Model(cfg), rng_(cfg.seed) {
    ModelConfig& c = cfg_;
    if (c.uses_qv()) {
      c.qv.in_channels = c.in_channels;
      qv_params_.emplace(c.qv, rng_);
    }
    int cin = c.uses_qv() ? c.qv.filters : c.in_channels;
    int h = c.in_h, w = c.in_w;
    for (int l = 0; l < 6; ++l) {
      const int cout = c.cnn_channels[l];
      const std::string name = "cnn.layer" + std::to_string(l + 1);
      convs_.emplace_back(name + ".conv", cin, cout, c.cnn_kernel, rng_);
      bns_.emplace_back(name + ".bn", cout);
      if (l < 5) {  // 2x2 pool after layers 1-5 only
        h = (h + 1) / 2;
        w = (w + 1) / 2;
      }
      cin = cout;
    }
    fc_dim_ = cin * h * w;
    fc_.emplace("cnn.fc", fc_dim_, c.classes, rng_);
  }

  Tensor forward(const Tensor& x, bool training) override {
    check_input(x);
    Tensor h = x;
    if (qv_params_) h = qv_forward(h, *qv_params_);
    for (int l = 0; l < 6; ++l) {
      h = convs_[l].forward(h);
      h = bns_[l].forward(h, training);
      if (l < 5) h = nn::max_pool2d(h);
      h = nn::relu(h);
    }
    h = reshape(h, {h.shape()[0], fc_dim_});
    return fc_->forward(h);
  }

  std::vector<nn::Parameter*> parameters() override {
    std::vector<nn::Parameter*> out;
    if (qv_params_) qv_params_->collect(out);
    for (int l = 0; l < 6; ++l) {
      convs_[l].collect(out);
      bns_[l].collect(out);
    }
    fc_->collect(out);
    return out;
  }

  std::vector<StateView> state() override {
    std::vector<StateView> out;
    for (auto* p : parameters()) out.push_back({p->name, p->value.shape(), &p->value.values()});
    for (auto& bn : bns_) {
      const int c = static_cast<int>(bn.running_mean.size());
      out.push_back({bn.name() + ".running_mean", {c}, &bn.running_mean});
      out.push_back({bn.name() + ".running_var", {c}, &bn.running_var});
    }
    return out;
  }

 private:
  void check_input(const Tensor& x) const {
    if (x.rank() != 4 || x.shape()[1] != cfg_.in_channels || x.shape()[2] != cfg_.in_h ||
        x.shape()[3] != cfg_.in_w)
      throw ContractError("model expects input [N," + std::to_string(cfg_.in_channels) + "," +
                          std::to_string(cfg_.in_h) + "," + std::to_string(cfg_.in_w) +
                          "], got " + qv::detail::shape_str(x.shape()));
  }

  Rng rng_;
  std::optional<QVParams> qv_params_;
  std::vector<nn::Conv2d> convs_;
  std::vector<nn::BatchNorm2d> bns_;
  int fc_dim_ = 0;
  std::optional<nn::Linear> fc_;
};

class VitModel : public Model {
 public:
  explicit VitModel(const ModelConfig& cfg)
      : Model(cfg), rng_(cfg.seed) {
    ModelConfig& c = cfg_;
    if (c.uses_qv()) {
      c.qv.in_channels = c.in_channels;
      qv_params_.emplace(c.qv, rng_);
    }
    const int maps = c.uses_qv() ? c.qv.filters : c.in_channels;
    if (c.token_mode == TokenMode::patch) {
      n_tokens_ = (c.in_h / c.vit_patch) * (c.in_w / c.vit_patch);
      token_dim_ = maps * c.vit_patch * c.vit_patch;
    } else {
      n_tokens_ = maps;
      token_dim_ = c.in_h * c.in_w;
    }
    const int d = c.vit_embed_dim;
    embed_.emplace("vit.embed", token_dim_, d, rng_);
    cls_ = nn::Parameter("vit.cls", nn::kaiming_uniform<float>({d}, d, rng_));
    pos_ = nn::Parameter("vit.pos",
                         nn::kaiming_uniform<float>({n_tokens_ + 1, d}, d, rng_));
    for (int l = 0; l < c.vit_layers; ++l) {
      const std::string name = "vit.layer" + std::to_string(l + 1);
      ln1_.emplace_back(name + ".ln1", d);
      attn_.emplace_back(name + ".attn", d, c.vit_heads, rng_);
      ln2_.emplace_back(name + ".ln2", d);
      mlp1_.emplace_back(name + ".mlp1", d, c.vit_mlp_dim, rng_);
      mlp2_.emplace_back(name + ".mlp2", c.vit_mlp_dim, d, rng_);
    }
    ln_final_.emplace("vit.ln_final", d);
    head_.emplace("vit.head", d, c.classes, rng_);
  }

  Tensor forward(const Tensor& x, bool) override {
    check_input(x);
    const int n = x.shape()[0];
    Tensor h = x;
    if (qv_params_) h = qv_forward(h, *qv_params_);

    Tensor tokens;
    if (cfg_.token_mode == TokenMode::patch) {
      tokens = patchify_op(h, cfg_.vit_patch);
    } else {
      tokens = reshape(h, {n, h.shape()[1], h.shape()[2] * h.shape()[3]});
    }
    tokens = embed_->forward(tokens);                        // [N,T,D]
    tokens = concat(expand_token(cls_.value, n), tokens, 1); // class token first
    tokens = broadcast_add(tokens, pos_.value);
    for (int l = 0; l < cfg_.vit_layers; ++l) {
      tokens = add(tokens, attn_[l].forward(ln1_[l].forward(tokens)));
      Tensor m = mlp2_[l].forward(nn::relu(mlp1_[l].forward(ln2_[l].forward(tokens))));
      tokens = add(tokens, m);
    }
    tokens = ln_final_->forward(tokens);
    return head_->forward(slice_token(tokens, 0));
  }

  std::vector<nn::Parameter*> parameters() override {
    std::vector<nn::Parameter*> out;
    if (qv_params_) qv_params_->collect(out);
    embed_->collect(out);
    out.push_back(&cls_);
    out.push_back(&pos_);
    for (int l = 0; l < cfg_.vit_layers; ++l) {
      ln1_[l].collect(out);
      attn_[l].collect(out);
      ln2_[l].collect(out);
      mlp1_[l].collect(out);
      mlp2_[l].collect(out);
    }
    ln_final_->collect(out);
    head_->collect(out);
    return out;
  }

  std::vector<StateView> state() override {
    std::vector<StateView> out;
    for (auto* p : parameters()) out.push_back({p->name, p->value.shape(), &p->value.values()});
    return out;
  }

  int token_count() const override { return n_tokens_ + 1; }

 private:
  void check_input(const Tensor& x) const {
    if (x.rank() != 4 || x.shape()[1] != cfg_.in_channels || x.shape()[2] != cfg_.in_h ||
        x.shape()[3] != cfg_.in_w)
      throw ContractError("model expects input [N," + std::to_string(cfg_.in_channels) + "," +
                          std::to_string(cfg_.in_h) + "," + std::to_string(cfg_.in_w) +
                          "], got " + qv::detail::shape_str(x.shape()));
  }

  Rng rng_;
  std::optional<QVParams> qv_params_;
  int n_tokens_ = 0, token_dim_ = 0;
  std::optional<nn::Linear> embed_;
  nn::Parameter cls_, pos_;
  std::vector<nn::LayerNorm> ln1_, ln2_;
  std::vector<nn::MultiHeadAttention> attn_;
  std::vector<nn::Linear> mlp1_, mlp2_;
  std::optional<nn::LayerNorm> ln_final_;
  std::optional<nn::Linear> head_;
};

}  // namespace

std::unique_ptr<Model> build_model(const ModelConfig& cfg) {
  cfg.validate();
  if (cfg.is_vit()) return std::make_unique<VitModel>(cfg);
  return std::make_unique<CnnModel>(cfg);
}

// ---------------------------------------------------------------------------
// Training and scoring
// ---------------------------------------------------------------------------

namespace {

// Packs records [lo, hi) into a channel-first batch tensor.
Tensor pack_batch(const std::vector<FeatureRecord>& data, const std::vector<int>& order, int lo,
                  int hi, std::vector<int>* labels) {
  const FeatureImage& first = data[order[lo]].image;
  const int c = first.channels, h = first.height, w = first.width;
  const int n = hi - lo;
  std::vector<float> vals(static_cast<int64_t>(n) * c * h * w);
  if (labels) labels->resize(n);
  for (int i = 0; i < n; ++i) {
    const FeatureRecord& rec = data[order[lo + i]];
    if (rec.image.channels != c || rec.image.height != h || rec.image.width != w)
      throw ContractError("batch: record shapes differ within the dataset");
    if (labels) (*labels)[i] = rec.label == Label::bonafide ? 1 : 0;
    float* dst = vals.data() + static_cast<int64_t>(i) * c * h * w;
    for (int ci = 0; ci < c; ++ci)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          dst[(static_cast<int64_t>(ci) * h + y) * w + x] = rec.image.at(y, x, ci);
  }
  return Tensor({n, c, h, w}, std::move(vals));
}

}  // namespace

std::string TrainHistory::to_csv() const {
  std::ostringstream os;
  os << "epoch,loss,acc,seconds\n";
  for (const auto& e : epochs) {
    os.precision(9);
    os << e.epoch << "," << e.loss << "," << e.accuracy << "," << e.seconds << "\n";
  }
  return os.str();
}

TrainHistory train(Model& model, const std::vector<FeatureRecord>& data, const TrainConfig& tcfg) {
  if (data.empty()) throw ContractError("train: dataset is empty");
  if (tcfg.batch_size < 1) throw ContractError("train: batch_size must be >= 1");
  if (tcfg.epochs < 1) throw ContractError("train: epochs must be >= 1");

  int64_t n_bona = 0, n_spoof = 0;
  for (const auto& r : data) (r.label == Label::bonafide ? n_bona : n_spoof)++;
  if (n_bona == 0 || n_spoof == 0)
    throw ContractError("train: dataset holds a single class (" + std::to_string(n_bona) +
                        " bonafide, " + std::to_string(n_spoof) +
                        " spoof); both classes are required");

  std::vector<float> class_weights;
  if (tcfg.class_weighting) {
    const double total = static_cast<double>(data.size());
    class_weights = {static_cast<float>(total / (2.0 * n_spoof)),
                     static_cast<float>(total / (2.0 * n_bona))};
  }

  nn::Adam adam(model.parameters(), static_cast<float>(tcfg.lr));
  const int n = static_cast<int>(data.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);

  TrainHistory history;
  for (int epoch = 1; epoch <= tcfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(Rng::mix(tcfg.seed, static_cast<uint64_t>(epoch)));
    for (int i = n - 1; i > 0; --i)
      std::swap(order[i], order[static_cast<int>(rng.uniform_int(0, i))]);

    double loss_sum = 0.0;
    int64_t correct = 0;
    std::vector<int> labels;
    for (int lo = 0; lo < n; lo += tcfg.batch_size) {
      const int hi = std::min(n, lo + tcfg.batch_size);
      Tensor x = pack_batch(data, order, lo, hi, &labels);
      Tensor logits = model.forward(x, /*training=*/true);
      Tensor loss = nn::cross_entropy(logits, labels, class_weights);
      loss.backward();
      adam.step();

      loss_sum += static_cast<double>(loss.item()) * (hi - lo);
      for (int i = 0; i < hi - lo; ++i) {
        const float z0 = logits.values()[static_cast<int64_t>(i) * 2];
        const float z1 = logits.values()[static_cast<int64_t>(i) * 2 + 1];
        const int predicted = z1 > z0 ? 1 : 0;
        if (predicted == labels[i]) ++correct;
      }
    }
    const auto t1 = std::chrono::steady_clock::now();
    EpochStats s;
    s.epoch = epoch;
    s.loss = loss_sum / n;
    s.accuracy = static_cast<double>(correct) / n;
    s.seconds = std::chrono::duration<double>(t1 - t0).count();
    history.epochs.push_back(s);
  }
  return history;
}

std::vector<double> score(Model& model, const std::vector<FeatureRecord>& records,
                          int batch_size) {
  if (records.empty()) throw ContractError("score: no records");
  if (batch_size < 1) throw ContractError("score: batch_size must be >= 1");
  const int n = static_cast<int>(records.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> scores(n);
  for (int lo = 0; lo < n; lo += batch_size) {
    const int hi = std::min(n, lo + batch_size);
    Tensor x = pack_batch(records, order, lo, hi, nullptr);
    Tensor logits = model.forward(x, /*training=*/false);
    for (int i = 0; i < hi - lo; ++i) {
      const double z0 = logits.values()[static_cast<int64_t>(i) * 2];
      const double z1 = logits.values()[static_cast<int64_t>(i) * 2 + 1];
      const double s = z1 - z0;
      if (!std::isfinite(s)) throw NumericError("score: non-finite logit difference");
      scores[lo + i] = s;
    }
  }
  return scores;
}

ScoreSet score_set(Model& model, const std::vector<FeatureRecord>& records, int batch_size) {
  ScoreSet set;
  set.scores = score(model, records, batch_size);
  set.labels.reserve(records.size());
  set.ids.reserve(records.size());
  char buf[24];
  for (size_t i = 0; i < records.size(); ++i) {
    set.labels.push_back(records[i].label);
    std::snprintf(buf, sizeof(buf), "rec_%06zu", i);
    set.ids.push_back(buf);
  }
  return set;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

constexpr uint32_t kCheckpointVersion = 1;

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

}  // namespace

void save_checkpoint(Model& model, const std::string& path) {
  std::string buf;
  buf += "QVCK";
  put_u32(buf, kCheckpointVersion);
  const std::string config = model.config().to_json();
  put_u32(buf, static_cast<uint32_t>(config.size()));
  buf += config;
  const auto entries = model.state();
  put_u32(buf, static_cast<uint32_t>(entries.size()));
  for (const auto& e : entries) {
    put_u32(buf, static_cast<uint32_t>(e.name.size()));
    buf += e.name;
    put_u32(buf, static_cast<uint32_t>(e.shape.size()));
    for (int d : e.shape) put_u32(buf, static_cast<uint32_t>(d));
    for (float v : *e.data) {
      uint32_t bits;
      std::memcpy(&bits, &v, 4);
      put_u32(buf, bits);
    }
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("save_checkpoint: cannot open " + path + " for writing");
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f) throw DataError("save_checkpoint: write failed for " + path);
}

std::unique_ptr<Model> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("load_checkpoint: cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  size_t pos = 0;
  auto need = [&](size_t n, const char* what) {
    if (pos + n > bytes.size())
      throw DataError("load_checkpoint: " + path + ": truncated while reading " +
                      std::string(what));
  };
  auto u32 = [&](const char* what) {
    need(4, what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(bytes[pos + i]) << (8 * i);
    pos += 4;
    return v;
  };

  need(4, "magic");
  if (std::memcmp(bytes.data(), "QVCK", 4) != 0)
    throw DataError("load_checkpoint: " + path + ": bad magic (not a QVCK checkpoint)");
  pos += 4;
  const uint32_t version = u32("version");
  if (version != kCheckpointVersion)
    throw DataError("load_checkpoint: " + path + ": unsupported version " +
                    std::to_string(version));
  const uint32_t config_len = u32("config length");
  need(config_len, "config blob");
  const std::string config(reinterpret_cast<const char*>(bytes.data() + pos), config_len);
  pos += config_len;

  auto model = build_model(ModelConfig::from_json(config));
  auto state = model->state();
  const uint32_t count = u32("entry count");
  if (count != state.size())
    throw DataError("load_checkpoint: " + path + ": has " + std::to_string(count) +
                    " entries, model expects " + std::to_string(state.size()));

  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t name_len = u32("name length");
    need(name_len, "name");
    const std::string name(reinterpret_cast<const char*>(bytes.data() + pos), name_len);
    pos += name_len;
    const uint32_t rank = u32("rank");
    std::vector<int> shape(rank);
    int64_t numel = 1;
    for (uint32_t d = 0; d < rank; ++d) {
      shape[d] = static_cast<int>(u32("dim"));
      numel *= shape[d];
    }
    StateView* target = nullptr;
    for (auto& e : state)
      if (e.name == name) {
        target = &e;
        break;
      }
    if (!target)
      throw DataError("load_checkpoint: " + path + ": unknown entry '" + name + "'");
    if (target->shape != shape || static_cast<int64_t>(target->data->size()) != numel)
      throw DataError("load_checkpoint: " + path + ": shape mismatch for '" + name + "'");
    for (int64_t j = 0; j < numel; ++j) {
      const uint32_t bits = u32("value");
      float v;
      std::memcpy(&v, &bits, 4);
      (*target->data)[j] = v;
    }
  }
  return model;
}

}  // namespace qv
