// SPDX-License-Identifier: Apache-2.0
#include "ovqa/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace ovqa::diff {

namespace {

constexpr const char* kMagic = "ovqa-checkpoint v1";

void write_doubles_le(std::ostream& os, const double* data, std::size_t n) {
  std::vector<unsigned char> buf(n * 8);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t bits = std::bit_cast<std::uint64_t>(data[i]);
    for (int b = 0; b < 8; ++b) buf[i * 8 + b] = static_cast<unsigned char>(bits >> (8 * b));
  }
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

void read_doubles_le(std::istream& is, double* data, std::size_t n) {
  std::vector<unsigned char> buf(n * 8);
  is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (static_cast<std::size_t>(is.gcount()) != buf.size()) {
    throw std::runtime_error("checkpoint: truncated blob");
  }
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(buf[i * 8 + b]) << (8 * b);
    data[i] = std::bit_cast<double>(bits);
  }
}

struct ManifestEntry {
  std::string name;
  std::vector<std::size_t> dims;
  std::size_t offset = 0;
};

void append_manifest(std::ostream& os, std::vector<const NDArray*>& order,
                     std::size_t& offset, const std::string& name, const NDArray& a) {
  if (name.find_first_of(" \t\n") != std::string::npos) {
    throw std::invalid_argument("checkpoint: tensor name contains whitespace: '" + name + "'");
  }
  os << name << " " << a.rank();
  for (std::size_t i = 0; i < a.rank(); ++i) os << " " << a.dim(i);
  os << " " << offset << "\n";
  order.push_back(&a);
  offset += a.numel();
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& store, std::int64_t epoch) {
  std::ostringstream header;
  header << kMagic << "\n";
  header << "step " << store.step() << "\n";
  header << "epoch " << epoch << "\n";
  header << "tensors " << store.count() * 3 << "\n";

  std::vector<const NDArray*> order;
  std::size_t offset = 0;
  for (const auto& [name, e] : store.entries()) {
    append_manifest(header, order, offset, "param/" + name, e.value);
    append_manifest(header, order, offset, "adam_m/" + name, e.m);
    append_manifest(header, order, offset, "adam_v/" + name, e.v);
  }
  header << "blob " << offset << "\n";

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
  os << header.str();
  for (const NDArray* a : order) write_doubles_le(os, a->data(), a->numel());
  if (!os) throw std::runtime_error("checkpoint: write failed for '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(is, line) || line != kMagic) {
    throw std::runtime_error("checkpoint: bad magic in '" + path + "'");
  }

  Checkpoint ck;
  std::int64_t step = 0;
  std::size_t tensor_count = 0;
  std::vector<ManifestEntry> entries;
  std::size_t blob_len = 0;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "step") {
      ls >> step;
    } else if (key == "epoch") {
      ls >> ck.epoch;
    } else if (key == "tensors") {
      ls >> tensor_count;
    } else if (key == "blob") {
      ls >> blob_len;
      break;
    } else {
      ManifestEntry e;
      e.name = key;
      std::size_t rank = 0;
      ls >> rank;
      if (rank > 2) throw std::runtime_error("checkpoint: bad rank in manifest line: " + line);
      e.dims.resize(rank);
      for (std::size_t i = 0; i < rank; ++i) ls >> e.dims[i];
      ls >> e.offset;
      if (!ls) throw std::runtime_error("checkpoint: malformed manifest line: " + line);
      entries.push_back(std::move(e));
    }
  }
  if (entries.size() != tensor_count) {
    throw std::runtime_error("checkpoint: manifest count mismatch in '" + path + "'");
  }

  std::vector<double> blob(blob_len);
  read_doubles_le(is, blob.data(), blob_len);

  for (const ManifestEntry& e : entries) {
    NDArray a = NDArray::zeros(e.dims);
    if (e.offset + a.numel() > blob_len) {
      throw std::runtime_error("checkpoint: tensor '" + e.name + "' overruns blob");
    }
    std::memcpy(a.data(), blob.data() + e.offset, a.numel() * sizeof(double));
    const auto slash = e.name.find('/');
    if (slash == std::string::npos) {
      throw std::runtime_error("checkpoint: unprefixed tensor name '" + e.name + "'");
    }
    const std::string kind = e.name.substr(0, slash);
    const std::string pname = e.name.substr(slash + 1);
    if (kind == "param") {
      ck.store.add(pname, std::move(a));
    } else if (kind == "adam_m") {
      ck.store.entry(pname).m = std::move(a);
    } else if (kind == "adam_v") {
      ck.store.entry(pname).v = std::move(a);
    } else {
      throw std::runtime_error("checkpoint: unknown tensor kind '" + kind + "'");
    }
  }
  ck.store.set_step(step);
  return ck;
}

}  // namespace ovqa::diff
