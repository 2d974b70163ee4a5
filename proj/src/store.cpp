#include "minehub/store.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include <spdlog/spdlog.h>

#include "minehub/digest.hpp"
#include "minehub/error.hpp"
#include "minehub/text.hpp"

namespace minehub {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view tombstone_field = "$deleted";
constexpr std::size_t id_length = 24;

bool sanitize_in_place(Document &value) {
  bool had_errors = false;
  if (value.is_string()) {
    auto clean = sanitize_utf8(value.get_ref<const std::string &>());
    if (clean.had_errors) {
      value = std::move(clean.text);
      had_errors = true;
    }
  } else if (value.is_array()) {
    for (auto &item : value) {
      had_errors |= sanitize_in_place(item);
    }
  } else if (value.is_object()) {
    bool bad_key = false;
    for (auto it = value.begin(); it != value.end(); ++it) {
      had_errors |= sanitize_in_place(it.value());
      bad_key |= sanitize_utf8(it.key()).had_errors;
    }
    if (bad_key) {
      Document rebuilt = Document::object();
      for (auto it = value.begin(); it != value.end(); ++it) {
        rebuilt[sanitize_utf8(it.key()).text] = it.value();
      }
      value = std::move(rebuilt);
      had_errors = true;
    }
  }
  return had_errors;
}

bool is_utc_timestamp(const Document &v) {
  if (!v.is_string()) {
    return false;
  }
  const auto &s = v.get_ref<const std::string &>();
  return s.size() == 20 && s.back() == 'Z' && s[10] == 'T' && parse_iso8601(s).has_value();
}

bool type_matches(const FieldSpec &f, const Document &v) {
  switch (f.type) {
  case FieldType::string:
    if (!v.is_string()) {
      return false;
    }
    return f.enum_values.empty() ||
           std::find(f.enum_values.begin(), f.enum_values.end(),
                     v.get_ref<const std::string &>()) != f.enum_values.end();
  case FieldType::integer: return v.is_number_integer();
  case FieldType::number: return v.is_number();
  case FieldType::boolean: return v.is_boolean();
  case FieldType::timestamp: return is_utc_timestamp(v);
  case FieldType::ref: return v.is_string() && !v.get_ref<const std::string &>().empty();
  case FieldType::string_list:
  case FieldType::ref_list:
    return v.is_array() &&
           std::all_of(v.begin(), v.end(), [](const Document &e) { return e.is_string(); });
  case FieldType::integer_list:
    return v.is_array() && std::all_of(v.begin(), v.end(),
                                       [](const Document &e) { return e.is_number_integer(); });
  case FieldType::object: return v.is_object();
  case FieldType::array: return v.is_array();
  }
  return false;
}

bool guard_is_set(const ProtectedGroup &g, const Document &doc) {
  const auto it = doc.find(g.guard);
  if (it == doc.end() || it->is_null()) {
    return false;
  }
  if (it->is_string()) {
    const auto &s = it->get_ref<const std::string &>();
    return !s.empty() && s != g.unset_value;
  }
  if (it->is_object() || it->is_array()) {
    return !it->empty();
  }
  return true;
}

void apply_protection(const CollectionSpec &spec, const Document &existing, Document &incoming) {
  for (const auto &g : spec.protected_groups) {
    if (!guard_is_set(g, existing)) {
      continue;
    }
    for (const auto &f : g.fields) {
      if (const auto it = existing.find(f); it != existing.end()) {
        incoming[f] = *it;
      } else {
        incoming.erase(f);
      }
    }
  }
}

const Document *lookup(const Document &doc, std::string_view path) {
  const Document *cur = &doc;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = path.find('.', start);
    const std::string key(path.substr(start, dot == std::string_view::npos ? dot : dot - start));
    if (!cur->is_object()) {
      return nullptr;
    }
    const auto it = cur->find(key);
    if (it == cur->end()) {
      return nullptr;
    }
    cur = &*it;
    if (dot == std::string_view::npos) {
      return cur->is_null() ? nullptr : cur;
    }
    start = dot + 1;
  }
}

bool matches(const Document &doc, const Condition &c) {
  const Document *v = lookup(doc, c.field);
  if (v == nullptr) {
    return c.op == Compare::ne && !c.value.is_null();
  }
  switch (c.op) {
  case Compare::eq: return *v == c.value;
  case Compare::ne: return *v != c.value;
  case Compare::lt: return *v < c.value;
  case Compare::le: return *v <= c.value;
  case Compare::gt: return *v > c.value;
  case Compare::ge: return *v >= c.value;
  }
  return false;
}

void check_field(const CollectionSpec &spec, std::string_view path) {
  const std::string top(path.substr(0, path.find('.')));
  if (top != id_field && top != encoding_flag_field && spec.field(top) == nullptr) {
    throw Error(ErrorCode::unknown_field, "unknown field " + spec.name + "." + top);
  }
}

std::vector<std::string> sorted_lines(const CollectionSpec &spec,
                                      const std::unordered_map<std::string, Document> &docs) {
  std::vector<std::pair<Document, const Document *>> keyed;
  keyed.reserve(docs.size());
  for (const auto &[id, doc] : docs) {
    keyed.emplace_back(natural_key_of(spec, doc), &doc);
  }
  std::sort(keyed.begin(), keyed.end(),
            [](const auto &a, const auto &b) { return a.first < b.first; });
  std::vector<std::string> lines;
  lines.reserve(keyed.size());
  for (const auto &[key, doc] : keyed) {
    lines.push_back(doc->dump());
  }
  return lines;
}

} // namespace

// ---- engines -------------------------------------------------------------

NdjsonEngine::NdjsonEngine(fs::path datadir) : datadir_(std::move(datadir)) {
  std::error_code ec;
  fs::create_directories(datadir_, ec);
  if (ec) {
    throw Error(ErrorCode::io, "cannot create data directory " + datadir_.string() + ": " +
                                   ec.message());
  }
}

fs::path NdjsonEngine::path_for(std::string_view collection) const {
  return datadir_ / (std::string(collection) + ".ndjson");
}

std::vector<std::string> NdjsonEngine::load(std::string_view collection) {
  std::vector<std::string> lines;
  std::ifstream in(path_for(collection), std::ios::binary);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) {
      lines.push_back(std::move(line));
    }
  }
  return lines;
}

void NdjsonEngine::append(std::string_view collection, std::string_view line) {
  std::lock_guard lock(files_mutex_);
  auto it = files_.find(collection);
  if (it == files_.end()) {
    std::FILE *f = std::fopen(path_for(collection).c_str(), "ab");
    if (f == nullptr) {
      throw Error(ErrorCode::io, "cannot open " + path_for(collection).string());
    }
    it = files_.emplace(std::string(collection),
                        std::unique_ptr<std::FILE, int (*)(std::FILE *)>(f, &std::fclose))
             .first;
  }
  std::FILE *f = it->second.get();
  std::string buf(line);
  buf.push_back('\n');
  if (std::fwrite(buf.data(), 1, buf.size(), f) != buf.size() || std::fflush(f) != 0) {
    throw Error(ErrorCode::io, "write failed for collection " + std::string(collection));
  }
}

void NdjsonEngine::rewrite(std::string_view collection, const std::vector<std::string> &lines) {
  std::lock_guard lock(files_mutex_);
  files_.erase(std::string(collection));
  const fs::path target = path_for(collection);
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    for (const auto &l : lines) {
      out << l << '\n';
    }
    if (!out) {
      throw Error(ErrorCode::io, "cannot write " + tmp.string());
    }
  }
  fs::rename(tmp, target);
}

void NdjsonEngine::write_schema(std::string_view text) {
  std::ofstream out(datadir_ / "schema.json", std::ios::binary | std::ios::trunc);
  out << text;
}

std::vector<std::string> MemoryEngine::load(std::string_view collection) {
  std::lock_guard lock(mutex_);
  const auto it = logs_.find(collection);
  return it == logs_.end() ? std::vector<std::string>{} : it->second;
}

void MemoryEngine::append(std::string_view collection, std::string_view line) {
  std::lock_guard lock(mutex_);
  logs_[std::string(collection)].emplace_back(line);
}

void MemoryEngine::rewrite(std::string_view collection, const std::vector<std::string> &lines) {
  std::lock_guard lock(mutex_);
  logs_[std::string(collection)] = lines;
}

// ---- free helpers --------------------------------------------------------

Document natural_key_of(const CollectionSpec &spec, const Document &doc) {
  Document key = Document::array();
  for (const auto &k : spec.natural_key) {
    const auto it = doc.find(k);
    if (it == doc.end() || it->is_null()) {
      throw Error(ErrorCode::missing_natural_key,
                  "missing natural key field " + spec.name + "." + k);
    }
    key.push_back(*it);
  }
  return key;
}

std::string make_id(std::string_view collection, const Document &doc) {
  const auto &spec = collection_spec(collection);
  const Document key = natural_key_of(spec, doc);
  return sha256_hex(std::string(collection) + "\n" + key.dump()).substr(0, id_length);
}

void validate_document(const CollectionSpec &spec, const Document &doc) {
  if (!doc.is_object()) {
    throw Error(ErrorCode::schema_violation, spec.name + ": document must be an object");
  }
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    if (it.key() == id_field) {
      continue;
    }
    if (it.key() == encoding_flag_field) {
      if (!it->is_boolean()) {
        throw Error(ErrorCode::schema_violation, spec.name + ".had_encoding_errors must be bool");
      }
      continue;
    }
    const FieldSpec *f = spec.field(it.key());
    if (f == nullptr) {
      throw Error(ErrorCode::schema_violation, "undeclared field " + spec.name + "." + it.key());
    }
    if (it->is_null()) {
      if (f->required) {
        throw Error(ErrorCode::schema_violation, "null required field " + spec.name + "." + f->name);
      }
      continue;
    }
    if (!type_matches(*f, *it)) {
      throw Error(ErrorCode::schema_violation, "field " + spec.name + "." + f->name +
                                                   " is not a valid " +
                                                   std::string(to_string(f->type)));
    }
  }
  for (const auto &f : spec.fields) {
    if (f.required && !doc.contains(f.name)) {
      throw Error(ErrorCode::schema_violation, "missing required field " + spec.name + "." + f.name);
    }
  }
}

// ---- store ---------------------------------------------------------------

Store::Store(const fs::path &datadir) : Store(std::make_unique<NdjsonEngine>(datadir)) {}

Store::Store(std::unique_ptr<StorageEngine> engine)
    : engine_(std::move(engine)), datadir_(engine_->location()) {
  for (const auto &spec : collections()) {
    collections_.emplace(spec.name, std::make_unique<CollectionState>());
  }
  load_all();
  engine_->write_schema(export_schema_text());
}

Store::~Store() {
  try {
    compact();
  } catch (const std::exception &e) {
    spdlog::error("store compaction failed: {}", e.what());
  }
}

Store::CollectionState &Store::state(std::string_view collection) const {
  const auto it = collections_.find(collection);
  if (it == collections_.end()) {
    throw Error(ErrorCode::unknown_collection, "unknown collection: " + std::string(collection));
  }
  return *it->second;
}

void Store::load_all() {
  for (const auto &spec : collections()) {
    auto &st = state(spec.name);
    const auto lines = engine_->load(spec.name);
    for (const auto &line : lines) {
      Document doc = Document::parse(line, nullptr, false);
      if (doc.is_discarded() || !doc.is_object()) {
        spdlog::warn("{}: skipping unreadable log line", spec.name);
        continue;
      }
      if (const auto t = doc.find(tombstone_field); t != doc.end() && t->is_string()) {
        st.docs.erase(t->get<std::string>());
        continue;
      }
      const auto id = doc.find(id_field);
      if (id == doc.end() || !id->is_string()) {
        spdlog::warn("{}: skipping log line without id", spec.name);
        continue;
      }
      auto key = id->get<std::string>();
      st.docs[std::move(key)] = std::move(doc);
    }
    st.dirty = !lines.empty() && sorted_lines(spec, st.docs) != lines;
  }
}

void Store::persist(std::string_view collection, CollectionState &st, const Document &doc) {
  engine_->append(collection, doc.dump());
  st.docs[doc[id_field].get<std::string>()] = doc;
  st.dirty = true;
}

std::string Store::upsert(std::string_view collection, Document doc, UpsertOptions options) {
  const auto &spec = collection_spec(collection);
  if (!doc.is_object()) {
    throw Error(ErrorCode::schema_violation, spec.name + ": document must be an object");
  }
  doc.erase(std::string(id_field));
  if (sanitize_in_place(doc)) {
    doc[std::string(encoding_flag_field)] = true;
  }
  const std::string id = make_id(collection, doc);
  validate_document(spec, doc);
  doc[std::string(id_field)] = id;

  auto &st = state(collection);
  std::unique_lock lock(st.mutex);
  if (const auto it = st.docs.find(id); it != st.docs.end()) {
    if (!options.validation_write) {
      apply_protection(spec, it->second, doc);
    }
    if (it->second == doc) {
      return id;
    }
  }
  persist(collection, st, doc);
  return id;
}

std::optional<Document> Store::modify(std::string_view collection, std::string_view id,
                                      const std::function<bool(Document &)> &fn,
                                      UpsertOptions options) {
  const auto &spec = collection_spec(collection);
  auto &st = state(collection);
  std::unique_lock lock(st.mutex);
  const auto it = st.docs.find(std::string(id));
  if (it == st.docs.end()) {
    return std::nullopt;
  }
  Document updated = it->second;
  if (!fn(updated)) {
    return it->second;
  }
  if (sanitize_in_place(updated)) {
    updated[std::string(encoding_flag_field)] = true;
  }
  updated[std::string(id_field)] = std::string(id);
  if (make_id(collection, updated) != id) {
    throw Error(ErrorCode::invalid_argument, spec.name + ": natural key fields are immutable");
  }
  validate_document(spec, updated);
  if (!options.validation_write) {
    apply_protection(spec, it->second, updated);
  }
  if (updated != it->second) {
    persist(collection, st, updated);
  }
  return updated;
}

std::optional<Document> Store::get(std::string_view collection, std::string_view id) const {
  const auto &st = state(collection);
  std::shared_lock lock(st.mutex);
  const auto it = st.docs.find(std::string(id));
  if (it == st.docs.end()) {
    return std::nullopt;
  }
  return it->second;
}

std::vector<Document> Store::query(std::string_view collection, const Query &q) const {
  const auto &spec = collection_spec(collection);
  for (const auto &c : q.conditions) {
    check_field(spec, c.field);
  }
  for (const auto &o : q.order) {
    check_field(spec, o);
  }
  std::vector<Document> out;
  {
    const auto &st = state(collection);
    std::shared_lock lock(st.mutex);
    for (const auto &[id, doc] : st.docs) {
      if (std::all_of(q.conditions.begin(), q.conditions.end(),
                      [&doc](const Condition &c) { return matches(doc, c); })) {
        out.push_back(doc);
      }
    }
  }
  std::vector<std::pair<Document, std::size_t>> keys;
  keys.reserve(out.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    Document k = Document::array();
    for (const auto &o : q.order) {
      const Document *v = lookup(out[i], o);
      k.push_back(v == nullptr ? Document() : *v);
    }
    k.push_back(natural_key_of(spec, out[i]));
    keys.emplace_back(std::move(k), i);
  }
  std::sort(keys.begin(), keys.end(), [](const auto &a, const auto &b) { return a.first < b.first; });
  std::vector<Document> sorted;
  sorted.reserve(out.size());
  for (const auto &[k, i] : keys) {
    sorted.push_back(std::move(out[i]));
  }
  return sorted;
}

std::size_t Store::count(std::string_view collection, const Query &q) const {
  if (q.conditions.empty()) {
    const auto &st = state(collection);
    std::shared_lock lock(st.mutex);
    return st.docs.size();
  }
  return query(collection, q).size();
}

std::optional<Document> Store::find_one(std::string_view collection, const Query &q) const {
  auto docs = query(collection, q);
  if (docs.empty()) {
    return std::nullopt;
  }
  return std::move(docs.front());
}

bool Store::remove(std::string_view collection, std::string_view id) {
  auto &st = state(collection);
  std::unique_lock lock(st.mutex);
  if (st.docs.erase(std::string(id)) == 0) {
    return false;
  }
  Document tomb;
  tomb[std::string(tombstone_field)] = std::string(id);
  engine_->append(collection, tomb.dump());
  st.dirty = true;
  return true;
}

void Store::compact() {
  for (const auto &spec : collections()) {
    auto &st = state(spec.name);
    std::unique_lock lock(st.mutex);
    if (!st.dirty) {
      continue;
    }
    engine_->rewrite(spec.name, sorted_lines(spec, st.docs));
    st.dirty = false;
  }
}

} // namespace minehub
