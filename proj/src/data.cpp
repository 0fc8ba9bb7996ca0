#include "moe/data.hpp"

#include "moe/binio.hpp"
#include "moe/error.hpp"

namespace moe {

Sample sample_input(const PatternSetPtr& ps, int n, int label, Philox& rng) {
  if (label != 1 && label != -1) throw ConfigError("label must be +1 or -1");
  if (n < 1) throw ConfigError("sample needs n >= 1 tokens");
  if (n > ps->dim())
    throw ConfigError("n = " + std::to_string(n) + " exceeds d = " + std::to_string(ps->dim()));

  Sample s;
  s.patterns = ps;
  s.label = static_cast<std::int8_t>(label);
  s.task_pos = static_cast<std::uint32_t>(rng.next_index(n));
  s.tokens.resize(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) {
    if (j == static_cast<int>(s.task_pos))
      s.tokens[j] = static_cast<std::uint32_t>(ps->task_index(label));
    else
      s.tokens[j] = static_cast<std::uint32_t>(ps->sample_irrelevant(rng));
  }
  return s;
}

Dataset sample_dataset(const PatternSetPtr& ps, int n, int count, bool balanced, Philox& rng) {
  if (count < 1) throw ConfigError("dataset needs count >= 1");
  Dataset ds;
  ds.patterns = ps;
  ds.seed = rng.seed();
  ds.samples.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    int label;
    if (balanced)
      label = (i % 2 == 0) ? +1 : -1;
    else
      label = (rng.next_u32() & 1u) ? +1 : -1;
    ds.samples.push_back(sample_input(ps, n, label, rng));
  }
  return ds;
}

void Dataset::save(const std::filesystem::path& path) const {
  if (samples.empty()) throw ConfigError("refusing to save an empty dataset");
  const int n = samples.front().n();
  auto out = open_output(path);
  binio::put_magic(out, "MOED1");
  binio::put_u32(out, static_cast<std::uint32_t>(patterns->dim()));
  binio::put_u32(out, static_cast<std::uint32_t>(n));
  binio::put_u32(out, static_cast<std::uint32_t>(samples.size()));
  for (const Sample& s : samples) {
    binio::put_i8(out, s.label);
    binio::put_u32(out, s.task_pos);
    for (std::uint32_t t : s.tokens) binio::put_u32(out, t);
  }
  if (!out) throw IoError("write failed: " + path.string());
}

Dataset Dataset::load(const std::filesystem::path& path, PatternSetPtr patterns) {
  auto in = open_input(path);
  const std::string what = path.string();
  binio::expect_magic(in, "MOED1", what);
  const int d = static_cast<int>(binio::get_u32(in, what));
  const int n = static_cast<int>(binio::get_u32(in, what));
  const int count = static_cast<int>(binio::get_u32(in, what));
  if (d != patterns->dim())
    throw IoError("dataset dimension " + std::to_string(d) + " does not match pattern set d = " +
                  std::to_string(patterns->dim()));

  Dataset ds;
  ds.patterns = std::move(patterns);
  ds.samples.resize(static_cast<std::size_t>(count));
  for (Sample& s : ds.samples) {
    s.patterns = ds.patterns;
    s.label = binio::get_i8(in, what);
    if (s.label != 1 && s.label != -1) throw IoError("bad label byte in " + what);
    s.task_pos = binio::get_u32(in, what);
    s.tokens.resize(static_cast<std::size_t>(n));
    for (std::uint32_t& t : s.tokens) {
      t = binio::get_u32(in, what);
      if (t >= static_cast<std::uint32_t>(d)) throw IoError("token index out of range in " + what);
    }
    if (s.task_pos >= static_cast<std::uint32_t>(n)) throw IoError("task position out of range in " + what);
  }
  return ds;
}

}  // namespace moe
