#include "degc/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <stdexcept>

#include "degc/io.hpp"

namespace degc {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'D', 'E', 'G', 'C', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  template <typename T>
  void pod(T v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.append(p, sizeof(T));
  }
  void str(const std::string& s) {
    pod(static_cast<std::uint32_t>(s.size()));
    buf_.append(s);
  }
  template <typename Derived>
  void values(const Eigen::DenseBase<Derived>& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) pod<double>(m(r, c));
  }
  const std::string& data() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string data) : buf_(std::move(data)) {}
  template <typename T>
  T pod() {
    if (pos_ + sizeof(T) > buf_.size()) throw DataError("truncated checkpoint");
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint32_t>();
    if (pos_ + n > buf_.size()) throw DataError("truncated checkpoint");
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  template <typename Derived>
  void values(Eigen::DenseBase<Derived>& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = pod<double>();
  }
  bool done() const { return pos_ == buf_.size(); }

 private:
  std::string buf_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  ckpt.model.validate();
  const int d = ckpt.model.embedding_dim;
  Writer w;
  for (char c : kMagic) w.pod(c);
  w.pod(kCheckpointVersion);
  w.pod(static_cast<std::uint8_t>(ckpt.model.variant == Variant::kNgcf ? 0 : 1));
  w.pod(static_cast<std::int32_t>(ckpt.segment));
  w.pod(static_cast<std::int32_t>(d));
  w.pod(static_cast<std::int32_t>(ckpt.model.num_layers()));
  for (int width : ckpt.model.widths()) w.pod(static_cast<std::int32_t>(width));
  for (const auto& l : ckpt.model.layers) {
    w.values(l.user_weights);
    w.values(l.item_weights);
  }

  auto write_rows = [&](const RowMatrix& m, const std::vector<bool>& known,
                        const IdVocabulary& vocab) {
    std::uint32_t n = 0;
    for (bool k : known) n += k ? 1 : 0;
    w.pod(n);
    for (std::size_t id = 0; id < known.size(); ++id) {
      if (!known[id]) continue;
      w.str(vocab.name(static_cast<NodeId>(id)));
      w.values(m.row(static_cast<Eigen::Index>(id)));
    }
  };
  write_rows(ckpt.embeddings.users, ckpt.embeddings.user_known, ckpt.users);
  write_rows(ckpt.embeddings.items, ckpt.embeddings.item_known, ckpt.items);

  w.values(ckpt.temporal.w_ta.transpose());
  w.pod(static_cast<std::uint32_t>(ckpt.temporal.last_seen.size()));
  for (const auto& [u, t] : ckpt.temporal.last_seen) {
    w.str(ckpt.users.name(u));
    w.pod(static_cast<std::int32_t>(t));
    w.values(ckpt.temporal.prev_embeddings.at(u).transpose());
  }
  write_file_atomic(path, w.data());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) throw DataError("missing file: " + path.string());
  Reader r(read_file(path));
  for (char c : kMagic)
    if (r.pod<char>() != c) throw DataError("not a checkpoint: " + path.string());
  if (const auto v = r.pod<std::uint32_t>(); v != kCheckpointVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(v));

  Checkpoint ckpt;
  ckpt.model.variant = r.pod<std::uint8_t>() == 0 ? Variant::kNgcf : Variant::kLightGcnDense;
  ckpt.segment = r.pod<std::int32_t>();
  const int d = r.pod<std::int32_t>();
  const int K = r.pod<std::int32_t>();
  if (d < 1 || K < 1) throw DataError("corrupt checkpoint header");
  ckpt.model.embedding_dim = d;
  std::vector<int> widths(K);
  for (auto& width : widths) width = r.pod<std::int32_t>();
  int prev = d;
  for (int width : widths) {
    ConvLayer l;
    l.activation = activation_for(ckpt.model.variant);
    l.user_weights.resize(width, 2 * prev);
    l.item_weights.resize(width, 2 * prev);
    r.values(l.user_weights);
    r.values(l.item_weights);
    ckpt.model.layers.push_back(std::move(l));
    prev = width;
  }

  ckpt.embeddings = EmbeddingTable(d, 0, 0);
  Eigen::VectorXd row(d);
  const auto n_users = r.pod<std::uint32_t>();
  for (std::uint32_t n = 0; n < n_users; ++n) {
    const NodeId id = ckpt.users.intern(r.str());
    r.values(row);
    ckpt.embeddings.set_user(id, row);
  }
  const auto n_items = r.pod<std::uint32_t>();
  for (std::uint32_t n = 0; n < n_items; ++n) {
    const NodeId id = ckpt.items.intern(r.str());
    r.values(row);
    ckpt.embeddings.set_item(id, row);
  }

  ckpt.temporal = TemporalAttention(d);
  r.values(ckpt.temporal.w_ta);
  const auto n_hist = r.pod<std::uint32_t>();
  for (std::uint32_t n = 0; n < n_hist; ++n) {
    const NodeId id = ckpt.users.intern(r.str());
    ckpt.temporal.last_seen[id] = r.pod<std::int32_t>();
    r.values(row);
    ckpt.temporal.prev_embeddings[id] = row;
  }
  if (!r.done()) throw DataError("trailing bytes in checkpoint");
  ckpt.model.validate();
  return ckpt;
}

}  // namespace degc
