#pragma once

#include <memory>
#include <string>
#include <vector>

#include "qv/cache.hpp"
#include "qv/metrics.hpp"
#include "qv/nn.hpp"
#include "qv/qv_block.hpp"
#include "qv/tensor.hpp"

namespace qv {

enum class Arch : uint8_t { cnn = 0, qv_cnn = 1, vit = 2, qv_vit = 3 };

// How the ViT turns the (C,H,W) stack into tokens: non-overlapping spatial
// patches, or one token per channel map.
enum class TokenMode : uint8_t { patch = 0, channel = 1 };

const char* to_string(Arch a);
Arch arch_from_string(const std::string& s);
const char* to_string(TokenMode m);
TokenMode token_mode_from_string(const std::string& s);

struct ModelConfig {
  Arch arch = Arch::cnn;
  QVConfig qv;  // used by the qv_* variants; in_channels is forced to match
  std::vector<int> cnn_channels{64, 64, 128, 128, 256, 256};
  int cnn_kernel = 3;
  int vit_layers = 8;
  int vit_heads = 4;
  int vit_patch = 8;
  int vit_embed_dim = 1024;
  int vit_mlp_dim = 2048;
  TokenMode token_mode = TokenMode::patch;
  int classes = 2;
  int in_channels = 1;
  int in_h = 32;
  int in_w = 32;
  uint64_t seed = 0;

  bool uses_qv() const { return arch == Arch::qv_cnn || arch == Arch::qv_vit; }
  bool is_vit() const { return arch == Arch::vit || arch == Arch::qv_vit; }
  void validate() const;
  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
};

// A named slice of model state (parameters plus normalization buffers);
// what checkpoints serialize.
struct StateView {
  std::string name;
  std::vector<int> shape;
  std::vector<float>* data;
};

class Model {
 public:
  explicit Model(ModelConfig cfg) : cfg_(std::move(cfg)) {}
  virtual ~Model() = default;

  // x: [N, in_channels, in_h, in_w] -> logits [N, classes].
  virtual Tensor forward(const Tensor& x, bool training) = 0;
  virtual std::vector<nn::Parameter*> parameters() = 0;
  virtual std::vector<StateView> state() = 0;

  // Tokens seen by the transformer (class token included); 0 for CNNs.
  virtual int token_count() const { return 0; }

  const ModelConfig& config() const { return cfg_; }

 protected:
  ModelConfig cfg_;
};

std::unique_ptr<Model> build_model(const ModelConfig& cfg);

struct TrainConfig {
  int batch_size = 32;
  int epochs = 100;
  double lr = 1e-4;
  uint64_t seed = 0;
  bool class_weighting = false;
};

struct EpochStats {
  int epoch = 0;  // 1-based
  double loss = 0.0;
  double accuracy = 0.0;
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  std::string to_csv() const;  // epoch,loss,acc,seconds
};

// Adam + cross-entropy over seeded shuffled mini-batches (final incomplete
// batch kept). Deterministic given (model seed, tcfg.seed).
TrainHistory train(Model& model, const std::vector<FeatureRecord>& data, const TrainConfig& tcfg);

// Detection score per record: logit(bonafide) - logit(spoof).
std::vector<double> score(Model& model, const std::vector<FeatureRecord>& records,
                          int batch_size = 64);

ScoreSet score_set(Model& model, const std::vector<FeatureRecord>& records, int batch_size = 64);

// QVCK checkpoint: magic "QVCK", version u32, config blob (u32 length +
// UTF-8 JSON), entry count u32, then per entry: name (u32 length + UTF-8),
// rank u32, dims u32 each, float32 little-endian values.
void save_checkpoint(Model& model, const std::string& path);
std::unique_ptr<Model> load_checkpoint(const std::string& path);

// Patch tokenization helpers ([C,H,W] row-major <-> [tokens][C*P*P]); the
// inverse reconstructs the input exactly.
std::vector<float> patchify_image(const std::vector<float>& chw, int c, int h, int w, int p);
std::vector<float> unpatchify_image(const std::vector<float>& tokens, int c, int h, int w, int p);

}  // namespace qv
