#include "skatelab/ik_table.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace skatelab {
namespace {

constexpr char kMagic[8] = {'S', 'K', 'I', 'K', 'T', 'B', 'L', '1'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("ik table: truncated file");
  return v;
}

}  // namespace

std::size_t GridKeyHash::operator()(const GridKey& k) const noexcept {
  std::uint64_t h = 0x9e3779b97f4a7c15ull;
  for (std::int64_t v : k) {
    std::uint64_t x = static_cast<std::uint64_t>(v) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ull;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebull;
    x ^= x >> 31;
    h ^= x;
  }
  return static_cast<std::size_t>(h);
}

IkTable::IkTable(const LimbGeometry& limb, const Workspace& workspace,
                 const Quantization& quantization)
    : limb_(limb), workspace_(workspace), quantization_(quantization) {
  limb_.validate();
  for (int d = 0; d < 4; ++d) {
    const double q = quantization_.step[d];
    const Range& r = workspace_.bounds[d];
    if (!(q > 0.0)) throw std::invalid_argument("ik table: quantization must be > 0");
    if (!(r.lo <= r.hi)) throw std::invalid_argument("ik table: inverted workspace range");
    key_lo_[d] = static_cast<std::int64_t>(std::ceil(r.lo / q - 1e-9));
    key_hi_[d] = static_cast<std::int64_t>(std::floor(r.hi / q + 1e-9));
  }
}

IkTable::IkTable(const IkTable& other)
    : limb_(other.limb_),
      workspace_(other.workspace_),
      quantization_(other.quantization_),
      key_lo_(other.key_lo_),
      key_hi_(other.key_hi_),
      entries_(other.entries_),
      hits_(other.hits_.load()),
      misses_(other.misses_.load()) {}

IkTable& IkTable::operator=(const IkTable& other) {
  if (this == &other) return *this;
  limb_ = other.limb_;
  workspace_ = other.workspace_;
  quantization_ = other.quantization_;
  key_lo_ = other.key_lo_;
  key_hi_ = other.key_hi_;
  entries_ = other.entries_;
  hits_ = other.hits_.load();
  misses_ = other.misses_.load();
  return *this;
}

GridKey IkTable::key_of(const SkatePose& pose) const {
  GridKey key;
  for (int d = 0; d < 4; ++d) key[d] = std::llround(pose[d] / quantization_.step[d]);
  return key;
}

SkatePose IkTable::pose_of(const GridKey& key) const {
  SkatePose pose;
  for (int d = 0; d < 4; ++d) pose[d] = static_cast<double>(key[d]) * quantization_.step[d];
  return pose;
}

bool IkTable::in_workspace(const GridKey& key) const {
  for (int d = 0; d < 4; ++d) {
    if (key[d] < key_lo_[d] || key[d] > key_hi_[d]) return false;
  }
  return true;
}

std::vector<GridKey> IkTable::grid_keys() const {
  std::vector<GridKey> keys;
  for (int d = 0; d < 4; ++d) {
    if (key_lo_[d] > key_hi_[d]) return keys;
  }
  GridKey k = key_lo_;
  while (true) {
    keys.push_back(k);
    int d = 3;
    while (d >= 0) {
      if (++k[d] <= key_hi_[d]) break;
      k[d] = key_lo_[d];
      --d;
    }
    if (d < 0) break;
  }
  return keys;
}

IkTable IkTable::build(const LimbGeometry& limb, const Workspace& workspace,
                       const Quantization& quantization,
                       const std::vector<IkFamily>& families) {
  IkTable table(limb, workspace, quantization);
  const std::vector<GridKey> keys = table.grid_keys();
  if (keys.empty()) throw std::invalid_argument("ik table: empty workspace grid");
  table.entries_.reserve(keys.size());
  for (const GridKey& key : keys) {
    const SkatePose pose = table.pose_of(key);
    Entry entry;
    bool any = false;
    for (IkFamily f : families) {
      const IkResult r = ik(limb, pose, f);
      if (r.ok()) {
        entry.solution[static_cast<int>(f)] = r.joints;
        any = true;
      }
    }
    if (any) table.entries_.emplace(key, entry);
  }
  return table;
}

std::optional<LimbJoints> IkTable::lookup(const SkatePose& pose, IkFamily family) const {
  const GridKey key = key_of(pose);
  if (in_workspace(key)) {
    const auto it = entries_.find(key);
    if (it != entries_.end()) {
      const auto& sol = it->second.solution[static_cast<int>(family)];
      if (sol) {
        hits_.fetch_add(1, std::memory_order_relaxed);
        return sol;
      }
    }
  }
  misses_.fetch_add(1, std::memory_order_relaxed);
  return std::nullopt;
}

std::optional<LimbJoints> IkTable::lookup_or_insert(const SkatePose& pose,
                                                     IkFamily family) {
  if (auto hit = lookup(pose, family)) return hit;
  const GridKey key = key_of(pose);
  if (!in_workspace(key)) return std::nullopt;
  const IkResult r = ik(limb_, pose_of(key), family);
  if (!r.ok()) return std::nullopt;
  entries_[key].solution[static_cast<int>(family)] = r.joints;
  return r.joints;
}

IkTableStats IkTable::stats() const {
  IkTableStats s;
  s.grid_points = 1;
  for (int d = 0; d < 4; ++d) {
    s.grid_points *= key_hi_[d] >= key_lo_[d]
                         ? static_cast<std::size_t>(key_hi_[d] - key_lo_[d] + 1)
                         : 0;
  }
  s.entries = entries_.size();
  for (const auto& [key, entry] : entries_) {
    for (const auto& sol : entry.solution) s.solutions += sol.has_value();
  }
  s.hits = hits_.load();
  s.misses = misses_.load();
  return s;
}

void IkTable::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("ik table: cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  write_pod(out, kVersion);
  write_pod(out, limb_.hash());
  for (const Range& r : workspace_.bounds) {
    write_pod(out, r.lo);
    write_pod(out, r.hi);
  }
  for (double q : quantization_.step) write_pod(out, q);

  std::vector<GridKey> keys;
  keys.reserve(entries_.size());
  for (const auto& [key, entry] : entries_) keys.push_back(key);
  std::sort(keys.begin(), keys.end());
  write_pod(out, static_cast<std::uint64_t>(keys.size()));
  for (const GridKey& key : keys) {
    for (std::int64_t k : key) write_pod(out, k);
    const Entry& e = entries_.at(key);
    std::uint8_t mask = 0;
    for (int f = 0; f < kNumIkFamilies; ++f) mask |= e.solution[f] ? (1u << f) : 0u;
    write_pod(out, mask);
    for (int f = 0; f < kNumIkFamilies; ++f) {
      if (!e.solution[f]) continue;
      for (double q : *e.solution[f]) write_pod(out, q);
    }
  }
  if (!out) throw std::runtime_error("ik table: write failed for " + path.string());
}

namespace {

IkTable::FileHeader read_header_from(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(magic, magic + 8, kMagic)) {
    throw std::runtime_error("ik table: bad magic");
  }
  if (read_pod<std::uint32_t>(in) != kVersion) {
    throw std::runtime_error("ik table: unsupported version");
  }
  IkTable::FileHeader h;
  h.geometry_hash = read_pod<std::uint64_t>(in);
  for (Range& r : h.workspace.bounds) {
    r.lo = read_pod<double>(in);
    r.hi = read_pod<double>(in);
  }
  for (double& q : h.quantization.step) q = read_pod<double>(in);
  h.entries = read_pod<std::uint64_t>(in);
  return h;
}

std::ifstream open_table(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw std::runtime_error("ik table: file not found: " + path.string());
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("ik table: cannot open " + path.string());
  return in;
}

}  // namespace

IkTable::FileHeader IkTable::read_header(const std::filesystem::path& path) {
  std::ifstream in = open_table(path);
  return read_header_from(in);
}

IkTable IkTable::load(const std::filesystem::path& path, const LimbGeometry& limb) {
  std::ifstream in = open_table(path);
  const FileHeader h = read_header_from(in);
  if (h.geometry_hash != limb.hash()) {
    throw std::runtime_error("ik table: geometry hash mismatch in " + path.string());
  }
  IkTable table(limb, h.workspace, h.quantization);
  table.entries_.reserve(h.entries);
  for (std::uint64_t n = 0; n < h.entries; ++n) {
    GridKey key;
    for (std::int64_t& k : key) k = read_pod<std::int64_t>(in);
    const auto mask = read_pod<std::uint8_t>(in);
    Entry e;
    for (int f = 0; f < kNumIkFamilies; ++f) {
      if (!(mask & (1u << f))) continue;
      LimbJoints q;
      for (double& v : q) v = read_pod<double>(in);
      e.solution[f] = q;
    }
    table.entries_.emplace(key, e);
  }
  return table;
}

}  // namespace skatelab
