#include "nbmig/statered.hpp"

#include <algorithm>
#include <array>
#include <deque>

#include <json.hpp>

#include "codec.hpp"
#include "nbmig/error.hpp"
#include "nbmig/hash.hpp"

namespace nbmig::state {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

const NamespaceObject& object_at(const NotebookState& state, const ObjectId& id) {
  auto it = state.objects.find(id);
  if (it == state.objects.end()) {
    throw Error(ErrorCode::InvalidArgument, "object '" + id + "' is not in the state");
  }
  return it->second;
}

std::uint64_t bytes_of(const NotebookState& state, const std::set<ObjectId>& ids) {
  std::uint64_t total = 0;
  for (const auto& id : ids) total += object_at(state, id).payload_size;
  return total;
}

}  // namespace

std::string_view to_string(ObjectKind kind) noexcept {
  switch (kind) {
    case ObjectKind::Variable: return "variable";
    case ObjectKind::Function: return "function";
    case ObjectKind::Module: return "module";
  }
  return "unknown";
}

std::optional<ObjectKind> parse_object_kind(std::string_view name) noexcept {
  for (auto k : {ObjectKind::Variable, ObjectKind::Function, ObjectKind::Module}) {
    if (to_string(k) == name) return k;
  }
  return std::nullopt;
}

std::string_view to_string(Direction direction) noexcept {
  return direction == Direction::LocalToRemote ? "local_to_remote" : "remote_to_local";
}

std::string_view to_string(PayloadMode mode) noexcept {
  return mode == PayloadMode::FullReduced ? "full_reduced" : "diff";
}

std::uint64_t content_hash_of(const NamespaceObject& object) {
  Fnv1a h;
  h.field(to_string(object.kind));
  h.field(object.payload_size);
  h.field(object.content);
  h.field(static_cast<std::uint64_t>(object.references.size()));
  for (const auto& r : object.references) h.field(r);
  h.field(static_cast<std::uint64_t>(object.free_names.size()));
  for (const auto& n : object.free_names) h.field(n);
  return h.digest();
}

void rehash(NamespaceObject& object) {
  if (object.kind == ObjectKind::Module) object.payload_size = 0;
  if (object.hashable) {
    object.content_hash = content_hash_of(object);
  } else {
    object.content_hash.reset();
  }
}

std::uint64_t NotebookState::total_bytes() const {
  std::uint64_t total = 0;
  for (const auto& [id, o] : objects) total += o.payload_size;
  return total;
}

void validate(const NotebookState& state) {
  for (const auto& [id, o] : state.objects) {
    if (o.id != id) throw Error(ErrorCode::InvalidState, "object stored under '" + id + "' has id '" + o.id + "'");
    if (o.hashable != o.content_hash.has_value()) {
      throw Error(ErrorCode::InvalidState, "object '" + id + "': content hash must be present iff hashable");
    }
    for (const auto& r : o.references) {
      if (!state.objects.contains(r)) {
        throw Error(ErrorCode::InvalidState, "object '" + id + "' references missing object '" + r + "'");
      }
    }
  }
  for (const auto& [name, id] : state.bindings) {
    if (!state.objects.contains(id)) {
      throw Error(ErrorCode::InvalidState, "name '" + name + "' is bound to missing object '" + id + "'");
    }
  }
}

NotebookState state_from_json(std::string_view text) {
  NotebookState state;
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidState, std::string("state file is not valid JSON: ") + e.what());
  }
  try {
    for (const auto& j : root.at("objects")) {
      NamespaceObject o;
      o.id = j.at("id").get<std::string>();
      o.name = j.value("name", std::string{});
      const auto kind = parse_object_kind(j.value("kind", std::string{"variable"}));
      if (!kind) throw Error(ErrorCode::InvalidState, "object '" + o.id + "' has an unknown kind");
      o.kind = *kind;
      o.payload_size = j.value("size", std::uint64_t{0});
      o.references = j.value("refs", std::vector<ObjectId>{});
      o.hashable = j.value("hashable", true);
      o.serializable = j.value("serializable", true);
      o.content = j.value("content", std::string{});
      o.free_names = j.value("free_names", std::set<std::string>{});
      rehash(o);
      if (!state.objects.emplace(o.id, o).second) {
        throw Error(ErrorCode::InvalidState, "duplicate object id '" + o.id + "'");
      }
    }
    if (root.contains("bindings")) state.bindings = root["bindings"].get<std::map<std::string, ObjectId>>();
    state.generation = root.value("generation", std::uint64_t{0});
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidState, std::string("malformed state file: ") + e.what());
  }
  validate(state);
  return state;
}

std::string state_to_json(const NotebookState& state, int indent) {
  ordered_json root;
  auto& objects = root["objects"] = ordered_json::array();
  for (const auto& [id, o] : state.objects) {
    ordered_json j;
    j["id"] = o.id;
    j["name"] = o.name;
    j["kind"] = std::string(to_string(o.kind));
    j["size"] = o.payload_size;
    j["refs"] = o.references;
    j["hashable"] = o.hashable;
    j["serializable"] = o.serializable;
    j["content"] = o.content;
    if (!o.free_names.empty()) j["free_names"] = o.free_names;
    j["hash"] = o.content_hash ? ordered_json(to_hex(*o.content_hash)) : ordered_json(nullptr);
    objects.push_back(std::move(j));
  }
  root["bindings"] = state.bindings;
  root["generation"] = state.generation;
  return root.dump(indent);
}

Closure needed_closure(const NotebookState& state, const cell::NameUsage& usage) {
  Closure out;
  std::deque<ObjectId> work;
  auto reach_name = [&](const std::string& name) {
    auto it = state.bindings.find(name);
    if (it == state.bindings.end()) {
      out.missing_names.insert(name);
      return;
    }
    if (out.ids.insert(it->second).second) work.push_back(it->second);
  };
  for (const auto& name : usage.required_names()) reach_name(name);

  while (!work.empty()) {
    const ObjectId id = std::move(work.front());
    work.pop_front();
    auto it = state.objects.find(id);
    if (it == state.objects.end()) continue;
    const auto& o = it->second;
    for (const auto& r : o.references) {
      if (state.objects.contains(r) && out.ids.insert(r).second) work.push_back(r);
    }
    if (o.kind == ObjectKind::Function) {
      for (const auto& name : o.free_names) reach_name(name);
    }
  }
  // Ids bound to nothing real never make it into the closure.
  std::erase_if(out.ids, [&](const ObjectId& id) { return !state.objects.contains(id); });
  return out;
}

std::uint64_t compressed_size(const NotebookState& state, const std::set<ObjectId>& ids) {
  detail::DeflateCounter counter;
  std::array<std::uint8_t, 8192> chunk{};
  for (const auto& id : ids) {
    const auto& o = object_at(state, id);
    // Content repeated up to the object's size; zeros when there is no content.
    std::uint64_t remaining = o.payload_size;
    std::size_t offset = 0;
    while (remaining > 0) {
      const std::size_t n = static_cast<std::size_t>(std::min<std::uint64_t>(remaining, chunk.size()));
      for (std::size_t i = 0; i < n; ++i) {
        chunk[i] = o.content.empty()
                       ? std::uint8_t{0}
                       : static_cast<std::uint8_t>(o.content[(offset + i) % o.content.size()]);
      }
      counter.feed(std::span(chunk.data(), n));
      offset = (offset + n) % std::max<std::size_t>(o.content.size(), 1);
      remaining -= n;
    }
  }
  return counter.finish();
}

ReduceResult reduce_and_serialize(const NotebookState& state, const std::set<ObjectId>& needed,
                                  bool compress, Direction direction) {
  LocalFallback fallback;
  for (const auto& id : needed) {
    if (!object_at(state, id).serializable) fallback.offending.insert(id);
  }
  if (!fallback.offending.empty()) return fallback;

  MigrationPayload p;
  p.direction = direction;
  p.mode = PayloadMode::FullReduced;
  p.included = needed;
  p.total_bytes = bytes_of(state, needed);
  p.compressed = compress;
  if (compress) p.compressed_bytes = compressed_size(state, needed);
  return p;
}

ReduceResult reduce_for_cell(const NotebookState& state, const cell::NameUsage& usage, bool compress,
                             Direction direction) {
  const auto closure = needed_closure(state, usage);
  auto result = reduce_and_serialize(state, closure.ids, compress, direction);
  if (auto* p = std::get_if<MigrationPayload>(&result)) p->missing_names = closure.missing_names;
  return result;
}

MigrationPayload diff_payload(const NotebookState& before, const NotebookState& after,
                              Direction direction, bool compress) {
  MigrationPayload p;
  p.direction = direction;
  p.mode = PayloadMode::Diff;
  for (const auto& [id, o] : after.objects) {
    auto it = before.objects.find(id);
    const bool is_new = it == before.objects.end();
    if (is_new || !o.hashable || o.content_hash != it->second.content_hash) p.included.insert(id);
  }
  p.total_bytes = bytes_of(after, p.included);
  p.compressed = compress;
  if (compress) p.compressed_bytes = compressed_size(after, p.included);
  return p;
}

Millis migration_time(const MigrationPayload& payload, double bandwidth, Millis latency,
                      std::optional<double> codec_rate) {
  if (!(bandwidth > 0)) throw Error(ErrorCode::InvalidBandwidth, "bandwidth must be positive");
  if (codec_rate && !(*codec_rate > 0)) {
    throw Error(ErrorCode::InvalidArgument, "codec rate must be positive");
  }
  const auto raw = static_cast<double>(payload.total_bytes);
  if (payload.compressed && payload.compressed_bytes) {
    const auto packed = static_cast<double>(*payload.compressed_bytes);
    Millis t = latency + packed / bandwidth;
    if (codec_rate) t += raw / *codec_rate + packed / *codec_rate;
    return t;
  }
  return latency + raw / bandwidth;
}

NotebookState subgraph(const NotebookState& state, const std::set<ObjectId>& ids) {
  NotebookState out;
  out.generation = state.generation;
  for (const auto& id : ids) out.objects.emplace(id, object_at(state, id));
  for (const auto& [name, id] : state.bindings) {
    if (ids.contains(id)) out.bindings.emplace(name, id);
  }
  return out;
}

void apply_payload(NotebookState& target, const NotebookState& source, const MigrationPayload& payload) {
  for (const auto& id : payload.included) target.objects.insert_or_assign(id, object_at(source, id));
  for (const auto& [name, id] : source.bindings) {
    if (target.objects.contains(id)) target.bindings.insert_or_assign(name, id);
  }
  target.generation = std::max(target.generation, source.generation);
}

std::string manifest_json(const MigrationPayload& payload, int indent) {
  ordered_json j;
  j["direction"] = std::string(to_string(payload.direction));
  j["mode"] = std::string(to_string(payload.mode));
  j["included"] = payload.included;
  j["total_bytes"] = payload.total_bytes;
  j["compressed_bytes"] =
      payload.compressed_bytes ? ordered_json(*payload.compressed_bytes) : ordered_json(nullptr);
  j["missing_names"] = payload.missing_names;
  return j.dump(indent);
}

}  // namespace nbmig::state
