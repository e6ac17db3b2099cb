#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <unordered_map>
#include <vector>

#include "degc/stream_data.hpp"

namespace degc {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Rng = std::mt19937_64;

enum class Variant { kNgcf, kLightGcnDense };
enum class Activation { kTanh, kIdentity };
enum class Side { kUser, kItem };

Activation activation_for(Variant variant);

/// Layer-0 node features. Rows are indexed by NodeId; rows of ids that were
/// never initialised are zero and flagged unknown.
struct EmbeddingTable {
  int dim = 0;
  RowMatrix users;
  RowMatrix items;
  std::vector<bool> user_known;
  std::vector<bool> item_known;

  EmbeddingTable() = default;
  EmbeddingTable(int dim, std::size_t n_users, std::size_t n_items);

  /// Grows the id space; existing rows are preserved.
  void reserve(std::size_t n_users, std::size_t n_items);
  bool has_user(NodeId u) const { return u < user_known.size() && user_known[u]; }
  bool has_item(NodeId i) const { return i < item_known.size() && item_known[i]; }
  void set_user(NodeId u, const Eigen::VectorXd& e);
  void set_item(NodeId i, const Eigen::VectorXd& e);

  friend bool operator==(const EmbeddingTable& a, const EmbeddingTable& b);
};

/// One graph-convolution layer. Row j of each matrix is filter j: its
/// incoming weights over [self (input_half) ; aggregated neighbours
/// (input_half)]. User and item matrices always share the width.
struct ConvLayer {
  Eigen::MatrixXd user_weights;
  Eigen::MatrixXd item_weights;
  Activation activation = Activation::kTanh;

  int width() const { return static_cast<int>(user_weights.rows()); }
  int input_dim() const { return static_cast<int>(user_weights.cols()); }
  int input_half() const { return input_dim() / 2; }
  Eigen::MatrixXd& weights(Side s) { return s == Side::kUser ? user_weights : item_weights; }
  const Eigen::MatrixXd& weights(Side s) const {
    return s == Side::kUser ? user_weights : item_weights;
  }

  friend bool operator==(const ConvLayer& a, const ConvLayer& b);
};

struct GcnModel {
  Variant variant = Variant::kNgcf;
  int embedding_dim = 0;
  std::vector<ConvLayer> layers;  // layers[k-1] is layer k

  /// Xavier-uniform weights for the given per-layer widths.
  static GcnModel create(Variant variant, int embedding_dim,
                         const std::vector<int>& widths, Rng& rng);

  int num_layers() const { return static_cast<int>(layers.size()); }
  ConvLayer& layer(int k) { return layers.at(k - 1); }
  const ConvLayer& layer(int k) const { return layers.at(k - 1); }
  std::vector<int> widths() const;
  /// Width of layer k's output; k = 0 is the embedding dimension.
  int width(int k) const { return k == 0 ? embedding_dim : layer(k).width(); }
  int representation_dim() const;
  /// Offset of layer k's block inside the concatenated representation.
  int representation_offset(int k) const;
  std::size_t num_weights() const;
  std::size_t num_zero_weights() const;
  /// Throws std::logic_error if the shapes are inconsistent.
  void validate() const;

  friend bool operator==(const GcnModel& a, const GcnModel& b);
};

void xavier_init(Eigen::MatrixXd& m, Rng& rng);

/// Coordinate-wise mean; the empty list yields the zero vector of `dim`.
Eigen::VectorXd aggregate_neighbors(std::span<const Eigen::VectorXd> neighbors,
                                    int dim);

/// sigma(W_side * [self; neighbors]).
Eigen::VectorXd layer_forward(const ConvLayer& layer, const Eigen::VectorXd& self,
                              const Eigen::VectorXd& neighbors, Side side);

double score_pair(const Eigen::VectorXd& user_rep, const Eigen::VectorXd& item_rep);

/// log(1 + exp(x)) without overflow.
double softplus(double x);

/// Mean of -ln sigmoid(pos - neg) over the pairs.
double bpr_loss(std::span<const double> pos_scores, std::span<const double> neg_scores);

/// Compact CSR view of the graph a forward pass runs on. Nodes added as
/// extras are isolated and propagate with an all-zero neighbour part.
class PropagationGraph {
 public:
  PropagationGraph() = default;
  static PropagationGraph build(const BipartiteGraph& graph,
                                std::span<const NodeId> extra_users = {},
                                std::span<const NodeId> extra_items = {});

  const std::vector<NodeId>& users() const { return users_; }
  const std::vector<NodeId>& items() const { return items_; }
  std::optional<int> local_user(NodeId u) const;
  std::optional<int> local_item(NodeId i) const;
  std::span<const int> user_neighbors(int local) const {
    return {user_adj_.data() + user_off_[local], user_adj_.data() + user_off_[local + 1]};
  }
  std::span<const int> item_neighbors(int local) const {
    return {item_adj_.data() + item_off_[local], item_adj_.data() + item_off_[local + 1]};
  }

 private:
  std::vector<NodeId> users_, items_;
  std::unordered_map<NodeId, int> user_index_, item_index_;
  std::vector<int> user_off_{0}, user_adj_;
  std::vector<int> item_off_{0}, item_adj_;
};

/// Layer-by-layer activations of one synchronous propagation. Holds a
/// pointer to the graph, which must outlive it.
struct ForwardPass {
  const PropagationGraph* graph = nullptr;
  std::vector<RowMatrix> user_h, item_h;      // index k = 0..K
  std::vector<RowMatrix> user_agg, item_agg;  // index k = 0..K-1
  RowMatrix user_rep, item_rep;               // e ++ h^1 ++ ... ++ h^K

  Eigen::VectorXd user(NodeId u) const;
  Eigen::VectorXd item(NodeId i) const;
};

/// Throws DataError if a graph node has no embedding.
ForwardPass model_forward(const GcnModel& model, const PropagationGraph& graph,
                          const EmbeddingTable& embeddings);

struct Triple {
  NodeId user = 0;
  NodeId pos_item = 0;
  NodeId neg_item = 0;
};

/// 0/1 selection over a layer's weight entries.
struct LayerSelection {
  Eigen::MatrixXd user;
  Eigen::MatrixXd item;

  static LayerSelection full(const ConvLayer& layer);
  static LayerSelection empty_like(const ConvLayer& layer);
  bool any() const;
};

struct ParamMask {
  bool user_embeddings = false;
  bool item_embeddings = false;
  std::vector<std::optional<LayerSelection>> layers;  // layers[k-1]

  static ParamMask none(const GcnModel& model);
  static ParamMask all(const GcnModel& model, bool embeddings);
  static ParamMask only_layer(const GcnModel& model, int k);

  bool empty() const;
  bool embeddings() const { return user_embeddings || item_embeddings; }
  /// Throws std::invalid_argument if the mask does not fit the model.
  void validate(const GcnModel& model) const;
};

/// Differentiable regularisers. `weight_l2` is lambda * sum w^2 over masked
/// weights; `embedding_l2` is lambda * mean over triples of
/// |e_u|^2 + |e_pos|^2 + |e_neg|^2 on masked embedding sides.
struct RegSpec {
  double weight_l2 = 0.0;
  double embedding_l2 = 0.0;
};

struct LossValue {
  double bpr = 0.0;
  double regularization = 0.0;
  double total() const { return bpr + regularization; }
};

struct LayerGradient {
  Eigen::MatrixXd user;
  Eigen::MatrixXd item;
};

struct Gradients {
  std::vector<std::optional<LayerGradient>> layers;
  std::optional<RowMatrix> users;  // dense over the table's id space
  std::optional<RowMatrix> items;

  bool empty() const;
  bool all_finite() const;
};

LossValue objective(const GcnModel& model, const EmbeddingTable& embeddings,
                    const PropagationGraph& graph, std::span<const Triple> batch,
                    const ParamMask& mask, const RegSpec& reg);

/// Exact reverse-mode gradient of `objective` with respect to the masked
/// parameters. Unmasked layers and embedding sides are left absent.
Gradients gradient(const GcnModel& model, const EmbeddingTable& embeddings,
                   const PropagationGraph& graph, std::span<const Triple> batch,
                   const ParamMask& mask, const RegSpec& reg,
                   LossValue* value = nullptr);

}  // namespace degc
