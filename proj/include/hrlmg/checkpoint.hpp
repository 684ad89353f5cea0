#pragma once

// Text checkpoints: meta lines plus named tensors written with shortest
// round-trip decimals, so save/load is bitwise exact.
//
//   hrlmg-checkpoint 1
//   meta <key> <value...>
//   tensor <name> <rows> <cols>
//   <rows*cols values, column-major, space separated>

#include <filesystem>
#include <map>
#include <string>

#include "hrlmg/errors.hpp"
#include "hrlmg/io.hpp"
#include "hrlmg/numerics.hpp"

namespace hrlmg {

template <class T>
struct Checkpoint {
  std::map<std::string, std::string> meta;
  std::map<std::string, Tensor2<T>> tensors;

  template <class P>
  void store(std::string_view prefix, const P& block) {
    for_each_tensor(block, [&](const std::string& name, const auto& t) {
      tensors[std::string(prefix) + name] = t.template cast<T>();
    });
  }

  // Every tensor of the block must be present with a matching shape.
  template <class P>
  void restore(std::string_view prefix, P& block) const {
    using S = typename P::Scalar;
    for_each_tensor(block, [&](const std::string& name, auto& t) {
      const std::string key = std::string(prefix) + name;
      auto it = tensors.find(key);
      if (it == tensors.end()) throw ParameterError("checkpoint: missing tensor " + key);
      if (it->second.rows() != t.rows() || it->second.cols() != t.cols())
        throw DimensionError("checkpoint: shape mismatch for " + key);
      t = it->second.template cast<S>();
    });
  }

  bool has_prefix(std::string_view prefix) const {
    auto it = tensors.lower_bound(std::string(prefix));
    return it != tensors.end() && it->first.compare(0, prefix.size(), prefix) == 0;
  }

  const std::string& get(const std::string& key) const {
    auto it = meta.find(key);
    if (it == meta.end()) throw ParameterError("checkpoint: missing meta entry " + key);
    return it->second;
  }
};

template <class T>
std::string format_checkpoint(const Checkpoint<T>& ck) {
  std::string out = "hrlmg-checkpoint 1\n";
  for (const auto& [k, v] : ck.meta) {
    if (k.find_first_of(" \t\n") != std::string::npos || v.find('\n') != std::string::npos)
      throw ParameterError("checkpoint: meta keys may not contain whitespace and values may not span lines");
    out += "meta " + k + " " + v + "\n";
  }
  for (const auto& [name, t] : ck.tensors) {
    out += "tensor " + name + " " + std::to_string(t.rows()) + " " + std::to_string(t.cols()) + "\n";
    for (Index i = 0; i < t.size(); ++i) {
      if (i) out += ' ';
      out += io::format_real(t.data()[i]);
    }
    out += '\n';
  }
  return out;
}

template <class T>
Checkpoint<T> parse_checkpoint(std::string_view text) {
  auto lines = io::split(text, '\n');
  if (lines.empty() || io::trim(lines[0]) != "hrlmg-checkpoint 1") throw ParseError(1, "not a checkpoint file");
  Checkpoint<T> ck;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::size_t lineno = i + 1;
    auto line = lines[i];
    if (io::trim(line).empty()) continue;
    if (line.substr(0, 5) == "meta ") {
      auto rest = line.substr(5);
      auto sp = rest.find(' ');
      if (sp == std::string_view::npos) throw ParseError(lineno, "meta line needs a key and a value");
      ck.meta[std::string(rest.substr(0, sp))] = std::string(rest.substr(sp + 1));
      continue;
    }
    auto f = io::split_whitespace(line);
    if (f.size() != 4 || f[0] != "tensor") throw ParseError(lineno, "expected 'tensor <name> <rows> <cols>'");
    auto rows = io::parse_number<long long>(f[2]);
    auto cols = io::parse_number<long long>(f[3]);
    if (!rows || !cols || *rows < 0 || *cols < 0) throw ParseError(lineno, "invalid tensor shape");
    if (i + 1 >= lines.size()) throw ParseError(lineno, "missing tensor values");
    auto vals = io::split_whitespace(lines[++i]);
    if (static_cast<long long>(vals.size()) != *rows * *cols)
      throw ParseError(lineno + 1, "expected " + std::to_string(*rows * *cols) + " values");
    Tensor2<T> t(*rows, *cols);
    for (std::size_t k = 0; k < vals.size(); ++k) {
      auto v = io::parse_number<T>(vals[k]);
      if (!v) throw ParseError(lineno + 1, "invalid number '" + std::string(vals[k]) + "'");
      t.data()[k] = *v;
    }
    ck.tensors[std::string(f[1])] = std::move(t);
  }
  return ck;
}

template <class T>
void save_checkpoint(const Checkpoint<T>& ck, const std::filesystem::path& path) {
  io::write_file_atomic(path, format_checkpoint(ck));
}

template <class T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint<T>(io::read_file(path));
}

}  // namespace hrlmg
