#include "mrpack/scalar.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace mrpack {

std::string type_name(FieldType t) {
  switch (t) {
    case FieldType::Int64: return "int64";
    case FieldType::Float64: return "float64";
    case FieldType::String: return "string";
    case FieldType::Bool: return "bool";
  }
  return "int64";
}

FieldType type_from_name(std::string_view name) {
  if (name == "int64") return FieldType::Int64;
  if (name == "float64") return FieldType::Float64;
  if (name == "string") return FieldType::String;
  if (name == "bool") return FieldType::Bool;
  throw std::invalid_argument("unknown field type: " + std::string(name));
}

int compare_scalar(const Scalar& a, const Scalar& b) {
  if (a.index() != b.index()) return a.index() < b.index() ? -1 : 1;
  return std::visit(
      [&](const auto& va) -> int {
        using T = std::decay_t<decltype(va)>;
        const T& vb = std::get<T>(b);
        if (va < vb) return -1;
        if (vb < va) return 1;
        return 0;
      },
      a);
}

int compare_ordered(const Scalar& a, const Scalar& b) {
  if (a.index() != b.index() && a.index() <= 1 && b.index() <= 1) {
    double x = scalar_as_double(a), y = scalar_as_double(b);
    if (x < y) return -1;
    if (y < x) return 1;
    return 0;
  }
  return compare_scalar(a, b);
}

void encode_scalar(const Scalar& s, std::string& out) {
  out.push_back(static_cast<char>('0' + s.index()));
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, int64_t>) {
          char buf[8];
          uint64_t u = static_cast<uint64_t>(v);
          for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((u >> (i * 8)) & 0xff);
          out.append(buf, 8);
        } else if constexpr (std::is_same_v<T, double>) {
          uint64_t u;
          std::memcpy(&u, &v, 8);
          char buf[8];
          for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((u >> (i * 8)) & 0xff);
          out.append(buf, 8);
        } else if constexpr (std::is_same_v<T, std::string>) {
          out.append(v);
          out.push_back('\0');
        } else {
          out.push_back(v ? '\1' : '\0');
        }
      },
      s);
}

std::string scalar_to_text(const Scalar& s) {
  return std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, int64_t>) {
          return std::to_string(v);
        } else if constexpr (std::is_same_v<T, double>) {
          std::array<char, 32> buf{};
          auto [p, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
          (void)ec;
          return std::string(buf.data(), p);
        } else if constexpr (std::is_same_v<T, std::string>) {
          return v;
        } else {
          return v ? "true" : "false";
        }
      },
      s);
}

Scalar scalar_from_text(FieldType type, std::string_view text) {
  switch (type) {
    case FieldType::Int64: {
      int64_t v = 0;
      auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
      if (ec != std::errc() || p != text.data() + text.size())
        throw std::invalid_argument("bad int64: " + std::string(text));
      return v;
    }
    case FieldType::Float64: {
      // std::from_chars for double is available on gcc 11
      double v = 0;
      auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
      if (ec != std::errc() || p != text.data() + text.size())
        throw std::invalid_argument("bad float64: " + std::string(text));
      return v;
    }
    case FieldType::String: return std::string(text);
    case FieldType::Bool: {
      if (text == "true" || text == "1") return true;
      if (text == "false" || text == "0") return false;
      throw std::invalid_argument("bad bool: " + std::string(text));
    }
  }
  throw std::invalid_argument("bad field type");
}

double scalar_as_double(const Scalar& s) {
  return std::visit(
      [](const auto& v) -> double {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, int64_t>) {
          return static_cast<double>(v);
        } else if constexpr (std::is_same_v<T, double>) {
          return v;
        } else if constexpr (std::is_same_v<T, std::string>) {
          std::string enc;
          enc.reserve(v.size() + 1);
          enc = v;
          return static_cast<double>(fnv1a64(enc) >> 11);
        } else {
          return v ? 1.0 : 0.0;
        }
      },
      s);
}

uint64_t fnv1a64(std::string_view bytes) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

int compare_record(const Record& a, const Record& b) {
  size_t nk = std::min(a.key.size(), b.key.size());
  for (size_t i = 0; i < nk; ++i)
    if (int c = compare_scalar(a.key[i], b.key[i])) return c;
  if (a.key.size() != b.key.size()) return a.key.size() < b.key.size() ? -1 : 1;
  size_t nv = std::min(a.value.size(), b.value.size());
  for (size_t i = 0; i < nv; ++i)
    if (int c = compare_scalar(a.value[i], b.value[i])) return c;
  if (a.value.size() != b.value.size()) return a.value.size() < b.value.size() ? -1 : 1;
  return 0;
}

size_t canonical_size(const Record& r) {
  std::string buf;
  for (const auto& s : r.key) encode_scalar(s, buf);
  buf.push_back('|');
  for (const auto& s : r.value) encode_scalar(s, buf);
  return buf.size();
}

uint64_t hash_scalars(const std::vector<Scalar>& values) {
  std::string buf;
  for (const auto& s : values) encode_scalar(s, buf);
  return fnv1a64(buf);
}

}  // namespace mrpack
