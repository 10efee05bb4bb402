#include "sdtc/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace sdtc {

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

std::uint64_t fnv1a(std::uint64_t h, const unsigned char* p, size_t n) {
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
  return h;
}

std::vector<unsigned char> payload_bytes(const std::vector<NamedTensor>& ts) {
  std::vector<unsigned char> bytes;
  for (const NamedTensor& nt : ts) {
    for (double v : nt.tensor.data()) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, 8);
      for (int i = 0; i < 8; ++i)
        bytes.push_back(static_cast<unsigned char>(bits >> (8 * i)));
    }
  }
  return bytes;
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const auto bytes = payload_bytes(ckpt.tensors);
  const std::uint64_t sum = fnv1a(kFnvOffset, bytes.data(), bytes.size());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open checkpoint for write: " + path);
  os << "SDTC-CKPT " << ckpt.version << "\n";
  os << "stage " << ckpt.stage << "\n";
  os << "epoch " << ckpt.epoch << "\n";
  os << "loss " << fmt_double(ckpt.final_loss) << "\n";
  os << "seed " << ckpt.seed << "\n";
  os << "config " << ckpt.config_lines.size() << "\n";
  for (const auto& l : ckpt.config_lines) os << l << "\n";
  os << "tensors " << ckpt.tensors.size() << "\n";
  for (const NamedTensor& nt : ckpt.tensors) {
    os << nt.name << ' ' << nt.tensor.rank();
    for (int d : nt.tensor.shape()) os << ' ' << d;
    os << "\n";
  }
  os << "payload-bytes " << bytes.size() << "\n";
  os << "payload-fnv " << sum << "\n";
  os << "DATA\n";
  os.write(reinterpret_cast<const char*>(bytes.data()),
           static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  std::string line, key;
  std::getline(is, line);
  {
    std::istringstream ls(line);
    std::string magic;
    int version = -1;
    ls >> magic >> version;
    if (magic != "SDTC-CKPT")
      throw std::runtime_error("not a checkpoint file: " + path);
    if (version != 1)
      throw std::runtime_error("unsupported checkpoint format version " +
                               std::to_string(version) + " in " + path);
  }
  Checkpoint ckpt;
  size_t expect_bytes = 0;
  std::uint64_t expect_sum = 0;
  std::vector<std::pair<std::string, std::vector<int>>> manifest;
  while (std::getline(is, line)) {
    if (line == "DATA") break;
    std::istringstream ls(line);
    ls >> key;
    if (key == "stage") {
      ls >> ckpt.stage;
    } else if (key == "epoch") {
      ls >> ckpt.epoch;
    } else if (key == "loss") {
      ls >> ckpt.final_loss;
    } else if (key == "seed") {
      ls >> ckpt.seed;
    } else if (key == "config") {
      size_t n;
      ls >> n;
      for (size_t i = 0; i < n; ++i) {
        if (!std::getline(is, line))
          throw std::runtime_error("truncated config block in " + path);
        ckpt.config_lines.push_back(line);
      }
    } else if (key == "tensors") {
      size_t n;
      ls >> n;
      for (size_t i = 0; i < n; ++i) {
        if (!std::getline(is, line))
          throw std::runtime_error("truncated tensor manifest in " + path);
        std::istringstream ts(line);
        std::string name;
        int rank;
        ts >> name >> rank;
        std::vector<int> shape(static_cast<size_t>(rank));
        for (int& d : shape) ts >> d;
        if (!ts) throw std::runtime_error("bad tensor manifest line in " + path);
        manifest.emplace_back(name, shape);
      }
    } else if (key == "payload-bytes") {
      ls >> expect_bytes;
    } else if (key == "payload-fnv") {
      ls >> expect_sum;
    } else {
      throw std::runtime_error("unknown checkpoint field '" + key + "' in " +
                               path);
    }
    if (!ls) throw std::runtime_error("malformed checkpoint header in " + path);
  }
  std::vector<unsigned char> bytes(expect_bytes);
  is.read(reinterpret_cast<char*>(bytes.data()),
          static_cast<std::streamsize>(expect_bytes));
  if (static_cast<size_t>(is.gcount()) != expect_bytes)
    throw std::runtime_error("checkpoint payload truncated: " + path);
  if (fnv1a(kFnvOffset, bytes.data(), bytes.size()) != expect_sum)
    throw std::runtime_error("checkpoint payload checksum mismatch: " + path);
  size_t off = 0;
  for (auto& [name, shape] : manifest) {
    size_t n = 1;
    for (int d : shape) n *= static_cast<size_t>(d);
    if (off + 8 * n > bytes.size())
      throw std::runtime_error("checkpoint manifest exceeds payload: " + path);
    std::vector<double> data(n);
    for (size_t i = 0; i < n; ++i) {
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b)
        bits |= static_cast<std::uint64_t>(bytes[off + 8 * i + b]) << (8 * b);
      std::memcpy(&data[i], &bits, 8);
    }
    off += 8 * n;
    ckpt.tensors.push_back({name, Tensor::from(shape, std::move(data))});
  }
  if (off != bytes.size())
    throw std::runtime_error("checkpoint payload size disagrees with manifest: " +
                             path);
  return ckpt;
}

Checkpoint snapshot(const std::string& stage,
                    std::vector<std::string> config_lines, long epoch,
                    double final_loss, std::uint64_t seed,
                    const std::vector<NamedTensor>& params) {
  Checkpoint ckpt;
  ckpt.stage = stage;
  ckpt.config_lines = std::move(config_lines);
  ckpt.epoch = epoch;
  ckpt.final_loss = final_loss;
  ckpt.seed = seed;
  for (const NamedTensor& p : params)
    ckpt.tensors.push_back(
        {p.name, Tensor::from(p.tensor.shape(), p.tensor.data())});
  return ckpt;
}

void apply_checkpoint(const Checkpoint& ckpt,
                      std::vector<NamedTensor> params) {
  std::unordered_map<std::string, const Tensor*> by_name;
  for (const NamedTensor& t : ckpt.tensors) by_name[t.name] = &t.tensor;
  for (NamedTensor& p : params) {
    auto it = by_name.find(p.name);
    if (it == by_name.end())
      throw std::runtime_error("checkpoint is missing tensor '" + p.name + "'");
    if (it->second->shape() != p.tensor.shape())
      throw std::runtime_error("checkpoint shape mismatch for tensor '" +
                               p.name + "': " + it->second->shape_str() +
                               " vs expected " + p.tensor.shape_str());
    p.tensor.data() = it->second->data();
  }
}

std::uint64_t params_checksum(const std::vector<NamedTensor>& params) {
  std::uint64_t h = kFnvOffset;
  for (const NamedTensor& p : params) {
    h = fnv1a(h, reinterpret_cast<const unsigned char*>(p.name.data()),
              p.name.size());
    h = fnv1a(h,
              reinterpret_cast<const unsigned char*>(p.tensor.data().data()),
              p.tensor.data().size() * 8);
  }
  return h;
}

}  // namespace sdtc
