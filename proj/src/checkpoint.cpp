// Copyright 2026 The AFIU Authors
// SPDX-License-Identifier: Apache-2.0

#include "afiu/checkpoint.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace afiu {

static_assert(std::endian::native == std::endian::little, "checkpoint payloads are written little-endian");

namespace {

constexpr const char* kMagic = "AFIU-CHECKPOINT 1";

void check_token(const std::string& s, const std::string& what) {
  if (s.empty() || s.find_first_of(" \t\r\n") != std::string::npos) {
    throw CheckpointError("checkpoint: " + what + " '" + s + "' must be a non-empty token without whitespace");
  }
}

void check_value(const std::string& s, const std::string& key) {
  if (s.find_first_of("\r\n") != std::string::npos) {
    throw CheckpointError("checkpoint: metadata value for '" + key + "' contains a line break");
  }
}

std::vector<std::pair<std::string, std::string>> metadata_lines(const CheckpointMetadata& m) {
  std::vector<std::pair<std::string, std::string>> kv{
      {"stage", m.stage},
      {"epochs", std::to_string(m.epochs)},
      {"iterations", std::to_string(m.iterations)},
      {"seed", std::to_string(m.seed)},
      {"config_digest", m.config_digest},
      {"created", m.created},
  };
  for (const auto& l : m.lineage) kv.emplace_back("lineage", l);
  for (const auto& [k, v] : m.extra) kv.emplace_back(k, v);
  return kv;
}

void apply_metadata(CheckpointMetadata& m, const std::string& key, const std::string& value) {
  try {
    if (key == "stage") m.stage = value;
    else if (key == "epochs") m.epochs = std::stoll(value);
    else if (key == "iterations") m.iterations = std::stoll(value);
    else if (key == "seed") m.seed = std::stoull(value);
    else if (key == "config_digest") m.config_digest = value;
    else if (key == "created") m.created = value;
    else if (key == "lineage") m.lineage.push_back(value);
    else m.extra[key] = value;
  } catch (const std::logic_error&) {
    throw CheckpointError("checkpoint: bad metadata value for '" + key + "': " + value);
  }
}

template <typename T>
std::set<std::string> names_of(const nn::Registry<T>& reg) {
  std::set<std::string> out;
  for (const auto& nv : reg.state()) out.insert(nv.name);
  return out;
}

template <typename T>
void assign(Var<T>& var, const std::string& name, const Tensor<float>& src) {
  if (var.shape() != src.shape()) {
    throw CheckpointError("checkpoint: tensor '" + name + "' has shape " + shape_to_string(src.shape()) +
                          ", model expects " + shape_to_string(var.shape()));
  }
  Tensor<T>& dst = var.mutable_value();
  for (int64_t i = 0; i < dst.numel(); ++i) dst[i] = static_cast<T>(src[i]);
}

}  // namespace

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ostringstream header;
  header << kMagic << '\n';
  for (const auto& [k, v] : metadata_lines(ckpt.meta)) {
    check_token(k, "metadata key");
    check_value(v, k);
    header << "meta " << k << '=' << v << '\n';
  }
  std::string payload;
  for (const auto& [name, t] : ckpt.tensors) {
    check_token(name, "tensor name");
    header << "tensor " << name << " f32 " << t.rank();
    for (int64_t d : t.shape()) header << ' ' << d;
    const size_t bytes = static_cast<size_t>(t.numel()) * sizeof(float);
    header << " offset=" << payload.size() << " size=" << bytes << '\n';
    const size_t at = payload.size();
    payload.resize(at + bytes);
    if (bytes) std::memcpy(payload.data() + at, t.data(), bytes);
  }
  const uLong crc = crc32(0L, reinterpret_cast<const Bytef*>(payload.data()), static_cast<uInt>(payload.size()));
  header << "end payload=" << payload.size() << " crc32=" << std::hex << std::setw(8) << std::setfill('0') << crc
         << '\n';

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("checkpoint: cannot open '" + path.string() + "' for writing");
  const std::string h = header.str();
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw CheckpointError("checkpoint: write to '" + path.string() + "' failed");
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint: cannot open '" + path.string() + "'");
  const std::string where = "checkpoint '" + path.string() + "': ";
  std::string line;
  if (!std::getline(in, line) || line != kMagic) throw CheckpointError(where + "not a checkpoint (bad magic)");

  Checkpoint ckpt;
  struct Entry {
    std::string name;
    Shape shape;
    size_t offset = 0, size = 0;
  };
  std::vector<Entry> entries;
  size_t payload_size = 0;
  unsigned long expected_crc = 0;
  bool ended = false;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string at = where + "line " + std::to_string(line_no) + ": ";
    if (line.rfind("meta ", 0) == 0) {
      const size_t eq = line.find('=');
      if (eq == std::string::npos) throw CheckpointError(at + "metadata line without '='");
      apply_metadata(ckpt.meta, line.substr(5, eq - 5), line.substr(eq + 1));
    } else if (line.rfind("tensor ", 0) == 0) {
      std::istringstream is(line.substr(7));
      Entry e;
      std::string dtype, off, sz;
      int64_t rank = -1;
      is >> e.name >> dtype >> rank;
      if (!is || dtype != "f32" || rank < 0 || rank > 8) throw CheckpointError(at + "malformed tensor entry");
      for (int64_t i = 0; i < rank; ++i) {
        int64_t d = -1;
        is >> d;
        if (!is || d < 0) throw CheckpointError(at + "malformed tensor shape");
        e.shape.push_back(d);
      }
      is >> off >> sz;
      if (!is || off.rfind("offset=", 0) != 0 || sz.rfind("size=", 0) != 0) {
        throw CheckpointError(at + "malformed tensor extent");
      }
      e.offset = std::stoull(off.substr(7));
      e.size = std::stoull(sz.substr(5));
      if (e.size != static_cast<size_t>(shape_numel(e.shape)) * sizeof(float)) {
        throw CheckpointError(at + "size does not match shape for '" + e.name + "'");
      }
      entries.push_back(std::move(e));
    } else if (line.rfind("end ", 0) == 0) {
      if (std::sscanf(line.c_str(), "end payload=%zu crc32=%lx", &payload_size, &expected_crc) != 2) {
        throw CheckpointError(at + "malformed end marker");
      }
      ended = true;
      break;
    } else {
      throw CheckpointError(at + "unrecognised header line");
    }
  }
  if (!ended) throw CheckpointError(where + "truncated header");

  std::string payload(payload_size, '\0');
  in.read(payload.data(), static_cast<std::streamsize>(payload_size));
  if (static_cast<size_t>(in.gcount()) != payload_size) throw CheckpointError(where + "truncated payload");
  if (in.peek() != std::char_traits<char>::eof()) throw CheckpointError(where + "trailing bytes after payload");
  const uLong crc = crc32(0L, reinterpret_cast<const Bytef*>(payload.data()), static_cast<uInt>(payload.size()));
  if (crc != expected_crc) throw CheckpointError(where + "payload checksum mismatch (corrupt file)");

  for (Entry& e : entries) {
    if (e.offset + e.size > payload_size) throw CheckpointError(where + "tensor '" + e.name + "' exceeds payload");
    std::vector<float> values(e.size / sizeof(float));
    if (e.size) std::memcpy(values.data(), payload.data() + e.offset, e.size);
    ckpt.tensors.emplace_back(e.name, Tensor<float>(e.shape, std::move(values)));
  }
  return ckpt;
}

template <typename T>
Checkpoint capture(const nn::Registry<T>& reg, CheckpointMetadata meta) {
  Checkpoint ckpt;
  ckpt.meta = std::move(meta);
  for (const auto& nv : reg.state()) ckpt.tensors.emplace_back(nv.name, nv.var.value().template cast<float>());
  return ckpt;
}

template <typename T>
void restore(nn::Registry<T>& reg, const Checkpoint& ckpt) {
  const std::set<std::string> model = names_of(reg);
  std::set<std::string> file;
  for (const auto& [name, t] : ckpt.tensors) file.insert(name);
  std::vector<std::string> missing, unexpected;
  for (const auto& n : model)
    if (!file.count(n)) missing.push_back(n);
  for (const auto& n : file)
    if (!model.count(n)) unexpected.push_back(n);
  if (!missing.empty() || !unexpected.empty()) {
    std::ostringstream os;
    os << "checkpoint does not match the model:";
    auto list = [&os](const char* label, const std::vector<std::string>& names) {
      if (names.empty()) return;
      os << ' ' << label << " [";
      for (size_t i = 0; i < names.size(); ++i) os << (i ? ", " : "") << names[i];
      os << ']';
    };
    list("missing", missing);
    list("unexpected", unexpected);
    throw CheckpointError(os.str());
  }
  // Validate every shape before touching the model.
  for (const auto& [name, t] : ckpt.tensors) {
    if (reg.find(name)->shape() != t.shape()) {
      throw CheckpointError("checkpoint: tensor '" + name + "' has shape " + shape_to_string(t.shape()) +
                            ", model expects " + shape_to_string(reg.find(name)->shape()));
    }
  }
  for (const auto& [name, t] : ckpt.tensors) assign(*reg.find(name), name, t);
}

template <typename T>
void restore_prefix(nn::Registry<T>& reg, const Checkpoint& ckpt, const std::string& prefix) {
  size_t matched = 0;
  for (const auto& nv : reg.state()) {
    if (nv.name.rfind(prefix, 0) != 0) continue;
    auto it = std::find_if(ckpt.tensors.begin(), ckpt.tensors.end(),
                           [&](const auto& entry) { return entry.first == nv.name; });
    if (it == ckpt.tensors.end()) throw CheckpointError("checkpoint: missing tensor '" + nv.name + "'");
    Var<T> v = nv.var;
    assign(v, nv.name, it->second);
    ++matched;
  }
  if (matched == 0) throw CheckpointError("checkpoint: no model tensor starts with '" + prefix + "'");
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const nn::Registry<T>& reg, CheckpointMetadata meta) {
  if (meta.created.empty()) meta.created = utc_timestamp();
  write_checkpoint(path, capture(reg, std::move(meta)));
}

template <typename T>
CheckpointMetadata load_checkpoint(const std::filesystem::path& path, nn::Registry<T>& reg) {
  Checkpoint ckpt = read_checkpoint(path);
  restore(reg, ckpt);
  return ckpt.meta;
}

#define AFIU_INSTANTIATE_CHECKPOINT(T)                                                            \
  template Checkpoint capture(const nn::Registry<T>&, CheckpointMetadata);                        \
  template void restore(nn::Registry<T>&, const Checkpoint&);                                     \
  template void restore_prefix(nn::Registry<T>&, const Checkpoint&, const std::string&);          \
  template void save_checkpoint(const std::filesystem::path&, const nn::Registry<T>&, CheckpointMetadata); \
  template CheckpointMetadata load_checkpoint(const std::filesystem::path&, nn::Registry<T>&);

AFIU_INSTANTIATE_CHECKPOINT(float)
AFIU_INSTANTIATE_CHECKPOINT(double)

}  // namespace afiu
