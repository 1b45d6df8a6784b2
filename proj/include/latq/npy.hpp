#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "latq/errors.hpp"
#include "latq/io.hpp"
#include "latq/tensor.hpp"

// npy version 1.0 reader/writer, specialized to the rank-4 tensors this
// library uses. Layout: magic "\x93NUMPY", version bytes 1 0, little-endian
// u16 header length, then a Python-dict header padded with spaces so the
// payload starts on a 64-byte boundary, newline-terminated. Payload is the
// raw little-endian element array, C order.

static_assert(std::endian::native == std::endian::little,
              "npy payload I/O assumes a little-endian host");

namespace latq {

namespace detail {

template <typename T>
struct npy_descr;
template <>
struct npy_descr<float> {
  static constexpr const char* value = "<f4";
};
template <>
struct npy_descr<double> {
  static constexpr const char* value = "<f8";
};
template <>
struct npy_descr<uint16_t> {
  static constexpr const char* value = "<u2";
};

inline std::string npy_header(const char* descr, const Shape4& shape) {
  std::string dict = "{'descr': '";
  dict += descr;
  dict += "', 'fortran_order': False, 'shape': (";
  dict += std::to_string(shape.n) + ", " + std::to_string(shape.h) + ", " +
          std::to_string(shape.w) + ", " + std::to_string(shape.c);
  dict += "), }";
  // 10 preamble bytes + dict + padding + '\n', total a multiple of 64.
  size_t total = (10 + dict.size() + 1 + 63) / 64 * 64;
  dict.append(total - 10 - dict.size() - 1, ' ');
  dict += '\n';

  std::string out;
  out.reserve(total);
  out += "\x93NUMPY";
  out += '\x01';
  out += '\x00';
  uint16_t hlen = static_cast<uint16_t>(dict.size());
  out += static_cast<char>(hlen & 0xff);
  out += static_cast<char>(hlen >> 8);
  out += dict;
  return out;
}

// Pulls the value substring for `key` out of the header dict. The three
// npy keys are comma-separated and values contain no nested commas except
// the shape tuple, which is handled by matching its parentheses.
inline std::string dict_value(const std::string& dict, const std::string& key) {
  std::string quoted = "'" + key + "'";
  size_t at = dict.find(quoted);
  if (at == std::string::npos) {
    throw format_error(format_code::bad_header, "npy header missing key " + quoted);
  }
  size_t colon = dict.find(':', at + quoted.size());
  if (colon == std::string::npos) {
    throw format_error(format_code::bad_header, "npy header missing ':' after " + quoted);
  }
  size_t begin = dict.find_first_not_of(" \t", colon + 1);
  if (begin == std::string::npos) {
    throw format_error(format_code::bad_header, "npy header truncated after " + quoted);
  }
  size_t end;
  if (dict[begin] == '(') {
    end = dict.find(')', begin);
    if (end == std::string::npos) {
      throw format_error(format_code::bad_header, "npy header has unclosed shape tuple");
    }
    ++end;
  } else {
    end = dict.find_first_of(",}", begin);
    if (end == std::string::npos) {
      throw format_error(format_code::bad_header, "npy header value unterminated");
    }
  }
  std::string value = dict.substr(begin, end - begin);
  while (!value.empty() && (value.back() == ' ' || value.back() == '\t')) {
    value.pop_back();
  }
  return value;
}

inline std::vector<int64_t> parse_shape_tuple(const std::string& value) {
  if (value.size() < 2 || value.front() != '(' || value.back() != ')') {
    throw format_error(format_code::bad_shape, "npy shape is not a tuple: " + value);
  }
  std::vector<int64_t> dims;
  size_t pos = 1;
  while (pos < value.size() - 1) {
    size_t next = value.find(',', pos);
    if (next == std::string::npos || next > value.size() - 1) next = value.size() - 1;
    std::string item = value.substr(pos, next - pos);
    size_t digit = item.find_first_not_of(" \t");
    if (digit != std::string::npos) {
      size_t used = 0;
      int64_t dim;
      try {
        dim = std::stoll(item.substr(digit), &used);
      } catch (const std::exception&) {
        throw format_error(format_code::bad_shape, "npy shape entry not an integer: " + item);
      }
      if (digit + used != item.find_last_not_of(" \t") + 1 || dim <= 0) {
        throw format_error(format_code::bad_shape, "npy shape entry invalid: " + item);
      }
      dims.push_back(dim);
    }
    pos = next + 1;
  }
  return dims;
}

struct NpyInfo {
  std::string descr;
  Shape4 shape;
  size_t payload_offset = 0;
};

inline NpyInfo parse_npy_preamble(const std::string& bytes, const std::string& path) {
  if (bytes.size() < 10 || bytes.compare(0, 6, "\x93NUMPY") != 0) {
    throw format_error(format_code::bad_magic, path + " is not an npy file");
  }
  if (bytes[6] != '\x01' || bytes[7] != '\x00') {
    throw format_error(format_code::bad_version,
                       path + " uses an unsupported npy version");
  }
  size_t hlen = static_cast<uint8_t>(bytes[8]) |
                (static_cast<size_t>(static_cast<uint8_t>(bytes[9])) << 8);
  if (bytes.size() < 10 + hlen || hlen == 0 || bytes[10 + hlen - 1] != '\n') {
    throw format_error(format_code::bad_header,
                       path + " has a truncated or unterminated npy header");
  }
  std::string dict = bytes.substr(10, hlen);

  NpyInfo info;
  info.payload_offset = 10 + hlen;
  info.descr = dict_value(dict, "descr");
  if (info.descr.size() >= 2 && info.descr.front() == '\'' && info.descr.back() == '\'') {
    info.descr = info.descr.substr(1, info.descr.size() - 2);
  }
  if (!info.descr.empty() && info.descr[0] == '>') {
    throw format_error(format_code::big_endian,
                       path + " stores big-endian data (" + info.descr + ")");
  }
  if (info.descr != "<f4" && info.descr != "<f8" && info.descr != "<u2") {
    throw format_error(format_code::bad_descr,
                       path + " has unsupported descr " + info.descr);
  }
  std::string order = dict_value(dict, "fortran_order");
  if (order == "True") {
    throw format_error(format_code::fortran_order,
                       path + " stores Fortran-order data");
  }
  if (order != "False") {
    throw format_error(format_code::bad_header,
                       path + " has invalid fortran_order value " + order);
  }
  auto dims = parse_shape_tuple(dict_value(dict, "shape"));
  if (dims.size() != 4) {
    throw format_error(format_code::bad_shape,
                       path + " has rank " + std::to_string(dims.size()) +
                           ", expected rank-4 (N, H, W, C)");
  }
  info.shape = Shape4{dims[0], dims[1], dims[2], dims[3]};
  return info;
}

}  // namespace detail

template <typename T>
void write_npy(const std::string& path, const Tensor4<T>& t) {
  std::string bytes = detail::npy_header(detail::npy_descr<T>::value, t.shape);
  size_t head = bytes.size();
  bytes.resize(head + t.data.size() * sizeof(T));
  std::memcpy(bytes.data() + head, t.data.data(), t.data.size() * sizeof(T));
  atomic_write(path, bytes);
}

namespace detail {

template <typename T>
Tensor4<T> tensor_from_bytes(const std::string& bytes, const NpyInfo& info,
                             const std::string& path) {
  size_t expect = static_cast<size_t>(info.shape.elements()) * sizeof(T);
  if (bytes.size() - info.payload_offset != expect) {
    throw format_error(format_code::payload_mismatch,
                       path + " payload is " +
                           std::to_string(bytes.size() - info.payload_offset) +
                           " bytes, shape " + info.shape.str() + " needs " +
                           std::to_string(expect));
  }
  Tensor4<T> t(info.shape.n, info.shape.h, info.shape.w, info.shape.c);
  std::memcpy(t.data.data(), bytes.data() + info.payload_offset, expect);
  return t;
}

}  // namespace detail

template <typename T>
Tensor4<T> read_npy(const std::string& path) {
  std::string bytes = read_file(path);
  auto info = detail::parse_npy_preamble(bytes, path);
  if (info.descr != detail::npy_descr<T>::value) {
    throw format_error(format_code::dtype_mismatch,
                       path + " holds " + info.descr + " data, expected " +
                           detail::npy_descr<T>::value);
  }
  return detail::tensor_from_bytes<T>(bytes, info, path);
}

// Latent ingestion accepts both 32- and 64-bit real files; 64-bit payloads
// are narrowed to the library's 32-bit latent precision.
inline LatentTensor read_latent(const std::string& path) {
  std::string bytes = read_file(path);
  auto info = detail::parse_npy_preamble(bytes, path);
  if (info.descr == "<f4") {
    return detail::tensor_from_bytes<float>(bytes, info, path);
  }
  if (info.descr == "<f8") {
    auto wide = detail::tensor_from_bytes<double>(bytes, info, path);
    LatentTensor t(wide.shape.n, wide.shape.h, wide.shape.w, wide.shape.c);
    for (size_t i = 0; i < wide.data.size(); ++i) {
      t.data[i] = static_cast<float>(wide.data[i]);
    }
    return t;
  }
  throw format_error(format_code::dtype_mismatch,
                     path + " holds " + info.descr + " data, expected <f4 or <f8");
}

}  // namespace latq
