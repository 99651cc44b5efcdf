#include "cake/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cake {

namespace {

std::string trim(std::string_view s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string_view::npos) return {};
  std::size_t b = s.find_last_not_of(" \t\r");
  return std::string(s.substr(a, b - a + 1));
}

std::uint64_t parse_u64(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    auto v = std::stoull(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("");
    return v;
  } catch (...) {
    throw std::invalid_argument("config: bad integer for " + what + ": '" + s + "'");
  }
}

double parse_double(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("");
    return v;
  } catch (...) {
    throw std::invalid_argument("config: bad number for " + what + ": '" + s + "'");
  }
}

}  // namespace

bool ConfigSection::has(std::string_view key) const {
  for (const auto& [k, v] : values)
    if (k == key) return true;
  return false;
}

std::string ConfigSection::get(std::string_view key) const {
  for (const auto& [k, v] : values)
    if (k == key) return v;
  throw std::invalid_argument("config: section [" + kind + (name.empty() ? "" : " " + name) +
                              "] is missing key '" + std::string(key) + "'");
}

std::string ConfigSection::get_or(std::string_view key, std::string_view fallback) const {
  for (const auto& [k, v] : values)
    if (k == key) return v;
  return std::string(fallback);
}

std::uint64_t ConfigSection::get_u64(std::string_view key) const {
  return parse_u64(get(key), std::string(key));
}

std::uint64_t ConfigSection::get_u64_or(std::string_view key, std::uint64_t fallback) const {
  if (!has(key)) return fallback;
  return get_u64(key);
}

double ConfigSection::get_double(std::string_view key) const {
  return parse_double(get(key), std::string(key));
}

double ConfigSection::get_double_or(std::string_view key, double fallback) const {
  if (!has(key)) return fallback;
  return get_double(key);
}

std::vector<std::string> ConfigSection::get_list(std::string_view key) const {
  std::string raw = get(key);
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= raw.size()) {
    std::size_t comma = raw.find(',', start);
    std::string item = trim(std::string_view(raw).substr(
        start, comma == std::string::npos ? std::string::npos : comma - start));
    if (!item.empty()) out.push_back(item);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

ConfigFile ConfigFile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse(text, path.parent_path());
}

ConfigFile ConfigFile::parse(std::string_view text, std::filesystem::path dir) {
  ConfigFile cfg;
  cfg.dir = std::move(dir);
  ConfigSection* current = nullptr;
  std::size_t pos = 0;
  int lineno = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos
                                                                         : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++lineno;
    std::size_t hash = raw.find('#');
    std::string line = trim(hash == std::string_view::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw std::invalid_argument("config: bad section header at line " + std::to_string(lineno));
      std::string inner = trim(std::string_view(line).substr(1, line.size() - 2));
      std::size_t space = inner.find_first_of(" \t");
      ConfigSection section;
      if (space == std::string::npos) {
        section.kind = inner;
      } else {
        section.kind = trim(std::string_view(inner).substr(0, space));
        section.name = trim(std::string_view(inner).substr(space + 1));
      }
      cfg.sections.push_back(std::move(section));
      current = &cfg.sections.back();
      continue;
    }
    std::size_t eq = line.find('=');
    if (eq == std::string::npos || !current)
      throw std::invalid_argument("config: expected 'key = value' at line " + std::to_string(lineno));
    current->values.emplace_back(trim(std::string_view(line).substr(0, eq)),
                                 trim(std::string_view(line).substr(eq + 1)));
  }
  return cfg;
}

const ConfigSection* ConfigFile::find(std::string_view kind, std::string_view name) const {
  for (const auto& s : sections)
    if (s.kind == kind && s.name == name) return &s;
  return nullptr;
}

const ConfigSection& ConfigFile::require(std::string_view kind, std::string_view name) const {
  const ConfigSection* s = find(kind, name);
  if (!s)
    throw std::invalid_argument("config: missing section [" + std::string(kind) +
                                (name.empty() ? "" : " " + std::string(name)) + "]");
  return *s;
}

std::vector<const ConfigSection*> ConfigFile::all(std::string_view kind) const {
  std::vector<const ConfigSection*> out;
  for (const auto& s : sections)
    if (s.kind == kind) out.push_back(&s);
  return out;
}

ModelProfile profile_from_section(const ConfigSection& section) {
  ModelProfile p;
  p.name = section.name;
  p.n_layers = static_cast<std::uint32_t>(section.get_u64("n_layers"));
  p.hidden_size = static_cast<std::uint32_t>(section.get_u64("hidden_size"));
  p.precision_bytes = static_cast<std::uint32_t>(section.get_u64("precision_bytes"));
  p.kv_multiplier = static_cast<std::uint32_t>(section.get_u64_or("kv_multiplier", 2));
  if (section.has("per_token_bytes")) p.per_token_bytes_override = section.get_u64("per_token_bytes");
  p.validate();
  return p;
}

CostModel cost_model_from_section(const ConfigSection& section) {
  CostModel m;
  m.alpha_ms = section.get_double("alpha_ms");
  m.beta_ms_per_token = section.get_double("beta_ms_per_token");
  m.reference_chunk_size = static_cast<std::uint32_t>(section.get_u64_or("reference_chunk_size", 512));
  m.validate();
  return m;
}

BandwidthTrace trace_from_section(const ConfigSection& section,
                                  const std::filesystem::path& base_dir) {
  int sources = int(section.has("mbps")) + int(section.has("file")) + int(section.has("points"));
  if (sources != 1)
    throw std::invalid_argument("config: trace '" + section.name +
                                "' needs exactly one of mbps/file/points");
  if (section.has("mbps")) return BandwidthTrace::constant(section.get_double("mbps"));
  if (section.has("file")) {
    std::filesystem::path p = section.get("file");
    if (p.is_relative()) p = base_dir / p;
    return load_trace_csv(p);
  }
  std::vector<BandwidthTrace::Breakpoint> pts;
  for (const auto& item : section.get_list("points")) {
    std::size_t colon = item.find(':');
    if (colon == std::string::npos)
      throw std::invalid_argument("config: trace point must be t_ms:mbps, got '" + item + "'");
    double t_ms = parse_double(item.substr(0, colon), "trace point time");
    double mbps = parse_double(item.substr(colon + 1), "trace point mbps");
    pts.push_back({ms_to_us(t_ms), mbps});
  }
  return BandwidthTrace(std::move(pts));
}

BandwidthTrace load_trace_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("trace csv: cannot open " + path.string());
  std::vector<BandwidthTrace::Breakpoint> pts;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    std::string t = trim(line);
    if (t.empty()) continue;
    std::size_t comma = t.find(',');
    if (comma == std::string::npos)
      throw std::invalid_argument("trace csv: expected 'time_ms,mbps' in " + path.string());
    std::string a = trim(std::string_view(t).substr(0, comma));
    std::string b = trim(std::string_view(t).substr(comma + 1));
    if (first && (a.empty() || !(std::isdigit(static_cast<unsigned char>(a[0])) || a[0] == '.' ||
                                 a[0] == '-'))) {
      first = false;  // header row
      continue;
    }
    first = false;
    pts.push_back({ms_to_us(parse_double(a, "time_ms")), parse_double(b, "mbps")});
  }
  return BandwidthTrace(std::move(pts));
}

}  // namespace cake
