#include "cpsdre/artifacts.hpp"

#include "cpsdre/tensor_io.hpp"

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace cpsdre {

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

void strip_json(nlohmann::json& j) {
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end();) {
      if (is_timing_field(it.key())) {
        it = j.erase(it);
      } else {
        strip_json(*it);
        ++it;
      }
    }
  } else if (j.is_array()) {
    for (auto& e : j) strip_json(e);
  }
}

std::string join_kept(const std::vector<std::string>& cells, const std::vector<bool>& drop, char sep) {
  std::string out;
  bool first = true;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i < drop.size() && drop[i]) continue;
    if (!first) out.push_back(sep);
    out += cells[i];
    first = false;
  }
  return out;
}

std::string strip_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line, out;
  std::vector<bool> drop;
  bool header = true;
  while (std::getline(is, line)) {
    const auto cells = split(line, ',');
    if (header) {
      for (const auto& c : cells) drop.push_back(is_timing_field(trim(c)));
      header = false;
    }
    out += join_kept(cells, drop, ',') + "\n";
  }
  return out;
}

std::string strip_markdown(const std::string& text) {
  std::istringstream is(text);
  std::string line, out;
  std::vector<bool> drop;
  bool in_table = false;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] != '|') {
      in_table = false;
      out += line + "\n";
      continue;
    }
    const auto cells = split(line, '|');
    if (!in_table) {
      drop.clear();
      for (const auto& c : cells) drop.push_back(is_timing_field(trim(c)));
      in_table = true;
    }
    out += join_kept(cells, drop, '|') + "\n";
  }
  return out;
}

}  // namespace

void write_factors(const std::filesystem::path& base, const CpFactors& f,
                   const nlohmann::ordered_json& meta) {
  f.validate();
  nlohmann::ordered_json j;
  j["dims"] = {f.X.rows(), f.Y.rows(), f.Z.rows()};
  j["rank"] = f.rank();
  j["layout"] = "X, Y, Z (column-major) then alpha; little-endian float64";
  j["meta"] = meta;
  write_json(base.string() + ".json", j);
  std::ofstream bin(base.string() + ".bin", std::ios::binary | std::ios::trunc);
  if (!bin) throw std::runtime_error("cannot write " + base.string() + ".bin");
  for (const Matrix* m : {&f.X, &f.Y, &f.Z}) {
    write_le_doubles(bin, m->data(), static_cast<std::size_t>(m->size()));
  }
  write_le_doubles(bin, f.alpha.data(), static_cast<std::size_t>(f.alpha.size()));
}

CpFactors read_factors(const std::filesystem::path& base) {
  const nlohmann::json j = read_json(base.string() + ".json");
  Eigen::Index dims[3];
  Eigen::Index rank = 0;
  try {
    for (int n = 0; n < 3; ++n) dims[n] = j.at("dims").at(n).get<Eigen::Index>();
    rank = j.at("rank").get<Eigen::Index>();
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(base.string() + ".json: " + e.what());
  }
  std::ifstream bin(base.string() + ".bin", std::ios::binary);
  if (!bin) throw std::runtime_error("cannot open " + base.string() + ".bin");
  CpFactors f;
  Matrix* mats[3] = {&f.X, &f.Y, &f.Z};
  for (int n = 0; n < 3; ++n) {
    const auto v = read_le_doubles(bin, static_cast<std::size_t>(dims[n] * rank));
    *mats[n] = Eigen::Map<const Matrix>(v.data(), dims[n], rank);
  }
  const auto a = read_le_doubles(bin, static_cast<std::size_t>(rank));
  f.alpha = Eigen::Map<const Vector>(a.data(), rank);
  if (bin.peek() != std::char_traits<char>::eof()) {
    throw std::runtime_error(base.string() + ".bin has trailing bytes");
  }
  f.validate();
  return f;
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const nlohmann::ordered_json& j) {
  write_text(path, j.dump(2) + "\n");
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

bool is_timing_field(std::string_view name) {
  if (name.size() >= 3 && name.substr(name.size() - 3) == "_ms") return true;
  return name == "cpu_ratio" || name == "care_time_ratio";
}

std::string strip_timing(const std::filesystem::path& path) {
  const std::string text = read_text(path);
  const std::string ext = path.extension().string();
  if (ext == ".json") {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(path.string() + ": " + e.what());
    }
    strip_json(j);
    return j.dump();
  }
  if (ext == ".csv") return strip_csv(text);
  if (ext == ".md") return strip_markdown(text);
  return text;
}

std::map<std::string, std::string> artifact_digests(const std::filesystem::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(entry.path(), dir).generic_string();
    out[rel] = fnv1a_hex(strip_timing(entry.path()));
  }
  return out;
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace cpsdre
