// SPDX-FileCopyrightText: 2026 The PointForge Authors
// SPDX-License-Identifier: Apache-2.0

#include "pointforge/checkpoint.hpp"

#include <bit>
#include <map>

#include "binary_io.hpp"

namespace pf::nn {

namespace {

using io::put_u;

constexpr std::string_view kMagic = "PFCKPT v1\n";

}  // namespace

std::uint64_t save_checkpoint(const std::filesystem::path& path, std::span<const CheckpointTensor> tensors) {
  std::string head(kMagic);
  put_u(head, tensors.size(), 8);
  std::string payload;
  for (const auto& t : tensors) {
    if (numel(t.shape) != t.values.size()) throw Error("checkpoint tensor '" + t.name + "' has inconsistent size");
    put_u(head, t.name.size(), 4);
    head += t.name;
    put_u(head, t.shape.size(), 4);
    for (std::size_t d : t.shape) put_u(head, d, 8);
    head.push_back(static_cast<char>(t.dtype));
    for (double v : t.values) {
      if (t.dtype == DType::F32) {
        put_u(payload, std::bit_cast<std::uint32_t>(static_cast<float>(v)), 4);
      } else {
        put_u(payload, std::bit_cast<std::uint64_t>(v), 8);
      }
    }
  }
  const std::uint64_t checksum = fnv1a64(payload.data(), payload.size());
  std::string tail;
  put_u(tail, checksum, 8);
  io::write_file(path, head + payload + tail);
  return checksum;
}

Checkpoint load_checkpoint_file(const std::filesystem::path& path) {
  const std::string data = io::read_file(path);
  io::Reader r(data, path.string());
  if (r.bytes(kMagic.size()) != kMagic) throw FormatError(path.string() + ": not a PFCKPT v1 file");
  const std::uint64_t count = r.u(8);
  if (count > (1u << 24)) throw FormatError(path.string() + ": implausible tensor count");
  Checkpoint ckpt;
  ckpt.tensors.resize(count);
  for (auto& t : ckpt.tensors) {
    const std::size_t len = r.u(4);
    t.name = r.bytes(len);
    const std::size_t rank = r.u(4);
    if (rank > 8) throw FormatError(path.string() + ": implausible rank for '" + t.name + "'");
    t.shape.resize(rank);
    for (auto& d : t.shape) d = r.u(8);
    const auto code = r.u(1);
    if (code > 1) throw FormatError(path.string() + ": unknown dtype for '" + t.name + "'");
    t.dtype = static_cast<DType>(code);
  }
  const std::size_t payload_start = r.pos();
  for (auto& t : ckpt.tensors) {
    const std::size_t n = numel(t.shape);
    const std::size_t width = t.dtype == DType::F32 ? 4 : 8;
    r.need(n * width);
    t.values.resize(n);
    for (auto& v : t.values) {
      if (t.dtype == DType::F32) {
        v = std::bit_cast<float>(static_cast<std::uint32_t>(r.u(4)));
      } else {
        v = std::bit_cast<double>(r.u(8));
      }
    }
  }
  const std::size_t payload_end = r.pos();
  const std::uint64_t stored = r.u(8);
  if (r.pos() != data.size()) throw FormatError(path.string() + ": trailing bytes after checksum");
  ckpt.payload_checksum = fnv1a64(data.data() + payload_start, payload_end - payload_start);
  if (stored != ckpt.payload_checksum) throw FormatError(path.string() + ": checksum mismatch");
  return ckpt;
}

template <class T>
LoadReport load_state(const std::vector<std::pair<std::string, Tensor<T>>>& state, const Checkpoint& ckpt,
                      bool strict) {
  std::map<std::string, const CheckpointTensor*> by_name;
  for (const auto& t : ckpt.tensors) by_name[t.name] = &t;
  LoadReport report;
  std::map<std::string, bool> used;
  std::vector<std::pair<Tensor<T>, const CheckpointTensor*>> copies;
  for (const auto& [name, tensor] : state) {
    auto it = by_name.find(name);
    if (it == by_name.end() || it->second->shape != tensor.shape()) {
      report.missing.push_back(name);
      continue;
    }
    used[name] = true;
    report.loaded.push_back(name);
    copies.emplace_back(tensor, it->second);
  }
  for (const auto& t : ckpt.tensors) {
    if (!used.count(t.name)) report.skipped.push_back(t.name);
  }
  if (strict && (!report.missing.empty() || !report.skipped.empty())) {
    std::string msg = "strict checkpoint load failed;";
    for (const auto& n : report.missing) msg += " missing/mismatched: " + n + ";";
    for (const auto& n : report.skipped) msg += " unexpected: " + n + ";";
    throw Error(msg);
  }
  for (auto& [tensor, src] : copies) {
    auto dst = Tensor<T>(tensor).data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(src->values[i]);
  }
  return report;
}

template LoadReport load_state(const std::vector<std::pair<std::string, Tensor<float>>>&, const Checkpoint&, bool);
template LoadReport load_state(const std::vector<std::pair<std::string, Tensor<double>>>&, const Checkpoint&, bool);

}  // namespace pf::nn
