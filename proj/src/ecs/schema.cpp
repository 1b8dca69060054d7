#include "ephemera/ecs/schema.h"

#include <sstream>
#include <stdexcept>

#include "ephemera/core/sha256.h"

namespace ephemera {

const char* to_string(ScalarType type) {
  switch (type) {
    case ScalarType::i64: return "i64";
    case ScalarType::u64: return "u64";
    case ScalarType::f64: return "f64";
    case ScalarType::boolean: return "bool";
    case ScalarType::bytes: return "bytes";
  }
  return "unknown";
}

std::optional<ScalarType> scalar_type_from(const std::string& token) {
  if (token == "i64") return ScalarType::i64;
  if (token == "u64") return ScalarType::u64;
  if (token == "f64") return ScalarType::f64;
  if (token == "bool") return ScalarType::boolean;
  if (token == "bytes") return ScalarType::bytes;
  return std::nullopt;
}

Bytes ComponentSchema::layout_encoding() const {
  ByteWriter w;
  w.put_u8(static_cast<std::uint8_t>(name.size()));
  w.put_bytes(to_bytes(name));
  w.put_u16(static_cast<std::uint16_t>(fields.size()));
  for (const auto& field : fields) {
    w.put_u8(static_cast<std::uint8_t>(field.name.size()));
    w.put_bytes(to_bytes(field.name));
    w.put_u8(static_cast<std::uint8_t>(field.type));
    w.put_u8(static_cast<std::uint8_t>(field.unit.size()));
    w.put_bytes(to_bytes(field.unit));
    if (field.type == ScalarType::bytes) w.put_u16(field.byte_size);
  }
  return w.take();
}

Hash32 ComponentSchema::id() const { return sha256(layout_encoding()); }

std::size_t ComponentSchema::value_size() const {
  std::size_t total = 0;
  for (const auto& field : fields) {
    switch (field.type) {
      case ScalarType::i64:
      case ScalarType::u64:
      case ScalarType::f64: total += 8; break;
      case ScalarType::boolean: total += 1; break;
      case ScalarType::bytes: total += field.byte_size; break;
    }
  }
  return total;
}

Bytes encode_component_data(const ComponentSchema& schema, std::uint64_t entity_id,
                            const FieldValues& values) {
  if (values.size() != schema.fields.size()) throw std::invalid_argument("field-count");
  ByteWriter w;
  w.put_hash(schema.id());
  w.put_u64(entity_id);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const FieldDef& field = schema.fields[i];
    const FieldValue& value = values[i];
    switch (field.type) {
      case ScalarType::i64:
        if (!std::holds_alternative<std::int64_t>(value)) throw std::invalid_argument("type-mismatch");
        w.put_i64(std::get<std::int64_t>(value));
        break;
      case ScalarType::u64:
        if (!std::holds_alternative<std::uint64_t>(value)) throw std::invalid_argument("type-mismatch");
        w.put_u64(std::get<std::uint64_t>(value));
        break;
      case ScalarType::f64:
        if (!std::holds_alternative<double>(value)) throw std::invalid_argument("type-mismatch");
        w.put_f64(std::get<double>(value));
        break;
      case ScalarType::boolean:
        if (!std::holds_alternative<bool>(value)) throw std::invalid_argument("type-mismatch");
        w.put_u8(std::get<bool>(value) ? 1 : 0);
        break;
      case ScalarType::bytes: {
        if (!std::holds_alternative<Bytes>(value)) throw std::invalid_argument("type-mismatch");
        const Bytes& raw = std::get<Bytes>(value);
        if (raw.size() != field.byte_size) throw std::invalid_argument("byte-width");
        w.put_bytes(raw);
        break;
      }
    }
  }
  return w.take();
}

std::optional<ComponentView> split_component_data(std::span<const std::uint8_t> data) {
  if (data.size() < 40) return std::nullopt;
  ComponentView view;
  ByteReader r(data);
  view.schema_id = r.get_hash();
  view.entity_id = r.get_u64();
  view.value_bytes = r.get_bytes(r.remaining());
  return view;
}

std::optional<FieldValues> decode_component_values(const ComponentSchema& schema,
                                                   std::span<const std::uint8_t> value_bytes) {
  if (value_bytes.size() != schema.value_size()) return std::nullopt;
  ByteReader r(value_bytes);
  FieldValues out;
  out.reserve(schema.fields.size());
  for (const auto& field : schema.fields) {
    switch (field.type) {
      case ScalarType::i64: out.emplace_back(r.get_i64()); break;
      case ScalarType::u64: out.emplace_back(r.get_u64()); break;
      case ScalarType::f64: out.emplace_back(r.get_f64()); break;
      case ScalarType::boolean: out.emplace_back(r.get_u8() != 0); break;
      case ScalarType::bytes: out.emplace_back(r.get_bytes(field.byte_size)); break;
    }
  }
  if (!r.ok()) return std::nullopt;
  return out;
}

SchemaParse parse_schema_source(const std::string& source) {
  SchemaParse out;
  std::istringstream in(source);
  std::string line;
  int line_no = 0;
  ComponentSchema current;
  bool open = false;
  auto fail = [&](const std::string& reason) {
    out.error = std::to_string(line_no) + ": " + reason;
    out.schemas.clear();
    return out;
  };
  auto flush = [&]() {
    if (!open) return true;
    for (const auto& existing : out.schemas)
      if (existing.name == current.name) return false;
    out.schemas.push_back(current);
    current = ComponentSchema{};
    open = false;
    return true;
  };

  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream tokens(line);
    std::string keyword;
    if (!(tokens >> keyword) || keyword[0] == '#') continue;
    if (keyword == "component") {
      std::string name;
      if (!(tokens >> name)) return fail("component-name-missing");
      if (!flush()) return fail("duplicate-component");
      current.name = name;
      open = true;
    } else if (keyword == "field") {
      if (!open) return fail("field-outside-component");
      std::string name, type_token, unit;
      if (!(tokens >> name >> type_token)) return fail("field-incomplete");
      tokens >> unit;
      FieldDef field;
      field.name = name;
      field.unit = unit;
      if (auto colon = type_token.find(':'); colon != std::string::npos) {
        auto base = scalar_type_from(type_token.substr(0, colon));
        if (!base || *base != ScalarType::bytes) return fail("unknown-scalar-type");
        field.type = ScalarType::bytes;
        try {
          field.byte_size = static_cast<std::uint16_t>(std::stoul(type_token.substr(colon + 1)));
        } catch (const std::exception&) {
          return fail("bad-byte-width");
        }
        if (field.byte_size == 0) return fail("bad-byte-width");
      } else {
        auto type = scalar_type_from(type_token);
        if (!type) return fail("unknown-scalar-type");
        if (*type == ScalarType::bytes) return fail("bad-byte-width");
        field.type = *type;
      }
      for (const auto& existing : current.fields)
        if (existing.name == field.name) return fail("duplicate-field");
      current.fields.push_back(field);
    } else {
      return fail("unknown-keyword:" + keyword);
    }
  }
  if (!flush()) return fail("duplicate-component");
  return out;
}

bool SchemaStore::add(const ComponentSchema& schema) {
  Hash32 id = schema.id();
  if (auto it = by_name_.find(schema.name); it != by_name_.end()) return it->second == id;
  by_name_[schema.name] = id;
  by_id_[id] = schema;
  return true;
}

const ComponentSchema* SchemaStore::find_by_name(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) return nullptr;
  return find_by_id(it->second);
}

const ComponentSchema* SchemaStore::find_by_id(const Hash32& id) const {
  auto it = by_id_.find(id);
  return it == by_id_.end() ? nullptr : &it->second;
}

}  // namespace ephemera
