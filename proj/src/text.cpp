#include "dramaturg/text.hpp"

#include <openssl/evp.h>

#include <array>
#include <stdexcept>

#include "dramaturg/error.hpp"

namespace dramaturg {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidLogLine: return "InvalidLogLine";
    case ErrorCode::InvalidInput: return "InvalidInput";
    case ErrorCode::EmptySlot: return "EmptySlot";
    case ErrorCode::UnknownSlot: return "UnknownSlot";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::UnknownPlaceholder: return "UnknownPlaceholder";
    case ErrorCode::MissingPlaceholder: return "MissingPlaceholder";
    case ErrorCode::MissingFamily: return "MissingFamily";
    case ErrorCode::EmptyCharacterList: return "EmptyCharacterList";
    case ErrorCode::BackendUnavailable: return "BackendUnavailable";
    case ErrorCode::BackendRejected: return "BackendRejected";
    case ErrorCode::ContextOverflow: return "ContextOverflow";
    case ErrorCode::UpstreamMissing: return "UpstreamMissing";
    case ErrorCode::LoopUnresolved: return "LoopUnresolved";
    case ErrorCode::UnparseableEdit: return "UnparseableEdit";
    case ErrorCode::EmptyTitle: return "EmptyTitle";
    case ErrorCode::NoCharactersFound: return "NoCharactersFound";
    case ErrorCode::NoScenesFound: return "NoScenesFound";
    case ErrorCode::MalformedScene: return "MalformedScene";
    case ErrorCode::EmptyOriginal: return "EmptyOriginal";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::IncompleteSession: return "IncompleteSession";
    case ErrorCode::SerializationError: return "SerializationError";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::Busy: return "Busy";
  }
  return "Unknown";
}

namespace text {

namespace {
bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}
}  // namespace

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::string trim_copy(std::string_view s) { return std::string(trim(s)); }

bool starts_with(std::string_view s, std::string_view prefix) { return s.substr(0, prefix.size()) == prefix; }

std::vector<std::string_view> split_lines(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    auto nl = s.find('\n', pos);
    if (nl == std::string_view::npos) {
      out.push_back(s.substr(pos));
      break;
    }
    auto line = s.substr(pos, nl - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    out.push_back(line);
    pos = nl + 1;
  }
  return out;
}

std::string unwrap_lines(std::string_view s) {
  std::string out;
  for (auto line : split_lines(s)) {
    auto t = trim(line);
    if (t.empty()) continue;
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

std::u32string utf8_decode(std::string_view s) {
  std::u32string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    auto c = static_cast<unsigned char>(s[i]);
    int extra = 0;
    char32_t cp = 0;
    if (c < 0x80) {
      cp = c;
    } else if ((c & 0xE0) == 0xC0) {
      cp = c & 0x1F;
      extra = 1;
    } else if ((c & 0xF0) == 0xE0) {
      cp = c & 0x0F;
      extra = 2;
    } else if ((c & 0xF8) == 0xF0) {
      cp = c & 0x07;
      extra = 3;
    } else {
      out.push_back(U'�');
      ++i;
      continue;
    }
    if (i + extra >= s.size()) {
      out.push_back(U'�');
      ++i;
      continue;
    }
    bool ok = true;
    for (int k = 1; k <= extra; ++k) {
      auto cc = static_cast<unsigned char>(s[i + k]);
      if ((cc & 0xC0) != 0x80) {
        ok = false;
        break;
      }
      cp = (cp << 6) | (cc & 0x3F);
    }
    if (!ok) {
      out.push_back(U'�');
      ++i;
      continue;
    }
    out.push_back(cp);
    i += extra + 1;
  }
  return out;
}

std::size_t utf8_length(std::string_view s) { return utf8_decode(s).size(); }

std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[md[i] >> 4];
    out += kHex[md[i] & 0xF];
  }
  return out;
}

}  // namespace text
}  // namespace dramaturg
