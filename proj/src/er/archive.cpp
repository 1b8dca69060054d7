#include "ephemera/er/archive.h"

#include <istream>
#include <ostream>

#include <json.hpp>

namespace ephemera {

namespace {

using nlohmann::json;

std::optional<Bytes> hex_field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_string()) return std::nullopt;
  return from_hex(it->get<std::string>());
}

std::optional<Address> address_field(const json& j, const char* key) {
  auto raw = hex_field(j, key);
  if (!raw || raw->size() != 32) return std::nullopt;
  return Address::from_span(*raw);
}

std::optional<Hash32> hash_field(const json& j, const char* key) {
  auto raw = hex_field(j, key);
  if (!raw || raw->size() != 32) return std::nullopt;
  return Hash32::from_span(*raw);
}

}  // namespace

SessionArchive snapshot_session(const ErRuntime& runtime) {
  SessionArchive archive;
  archive.er_id = runtime.er_id();
  archive.config = runtime.config();
  archive.created_at_ms = runtime.created_at_ms();
  archive.log = runtime.log();
  archive.commits = runtime.commit_history();
  return archive;
}

void write_session_archive(std::ostream& out, const SessionArchive& archive) {
  json session;
  session["record"] = "session";
  session["er_id"] = archive.er_id;
  session["created_at_ms"] = archive.created_at_ms;
  session["config"] = to_hex(encode_er_config(archive.config));
  out << session.dump() << '\n';

  for (const auto& [address, encoding] : archive.log.baseline) {
    json line;
    line["record"] = "baseline";
    line["account"] = address.hex();
    line["encoding"] = to_hex(encoding);
    out << line.dump() << '\n';
  }

  for (const LogSegment& segment : archive.log.segments) {
    json open;
    open["record"] = "segment";
    open["start_commit"] = segment.start_commit;
    out << open.dump() << '\n';
    for (const auto& [address, encoding] : segment.clones) {
      json clone;
      clone["record"] = "clone";
      clone["account"] = address.hex();
      clone["encoding"] = to_hex(encoding);
      out << clone.dump() << '\n';
    }
    for (const LoggedTx& logged : segment.txs) {
      json tx;
      tx["record"] = "tx";
      tx["wire"] = to_hex(encode_transaction(logged.tx));
      tx["status"] = static_cast<unsigned>(logged.status);
      tx["fee_exempt"] = logged.fee_exempt;
      tx["pre"] = logged.pre_state.hex();
      tx["post"] = logged.post_state.hex();
      out << tx.dump() << '\n';
    }
    if (segment.closed) {
      json close;
      close["record"] = "segment_end";
      close["end_commit"] = segment.end_commit;
      close["segment_hash"] = segment.segment_hash.hex();
      out << close.dump() << '\n';
    }
  }

  for (const CommitRecord& commit : archive.commits) {
    json line;
    line["record"] = "commit";
    line["base_slot"] = commit.base_slot;
    line["data"] = to_hex(encode_commit_record(commit));
    out << line.dump() << '\n';
  }
}

std::optional<SessionArchive> read_session_archive(std::istream& in, std::string* error) {
  auto fail = [&](std::size_t line_no, const std::string& what) -> std::optional<SessionArchive> {
    if (error) *error = "line " + std::to_string(line_no) + ": " + what;
    return std::nullopt;
  };

  SessionArchive archive;
  bool saw_session = false;
  LogSegment* segment = nullptr;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("record") || !j["record"].is_string())
      return fail(line_no, "not a record object");
    const std::string record = j["record"].get<std::string>();

    if (record == "session") {
      if (saw_session) return fail(line_no, "duplicate session record");
      saw_session = true;
      if (!j.contains("er_id") || !j["er_id"].is_number_unsigned())
        return fail(line_no, "bad er_id");
      archive.er_id = j["er_id"].get<std::uint64_t>();
      archive.created_at_ms = j.value("created_at_ms", std::uint64_t{0});
      auto raw = hex_field(j, "config");
      if (!raw) return fail(line_no, "bad config");
      ByteReader reader(*raw);
      auto config = decode_er_config(reader);
      if (!config || !reader.at_end()) return fail(line_no, "bad config");
      archive.config = *config;
      continue;
    }
    if (!saw_session) return fail(line_no, "record before session header");

    if (record == "baseline") {
      auto address = address_field(j, "account");
      auto encoding = hex_field(j, "encoding");
      if (!address || !encoding) return fail(line_no, "bad baseline record");
      archive.log.baseline[*address] = *encoding;
    } else if (record == "segment") {
      if (!j.contains("start_commit") || !j["start_commit"].is_number_unsigned())
        return fail(line_no, "bad segment record");
      archive.log.segments.emplace_back();
      segment = &archive.log.segments.back();
      segment->start_commit = j["start_commit"].get<std::uint64_t>();
    } else if (record == "clone") {
      if (!segment) return fail(line_no, "clone outside segment");
      auto address = address_field(j, "account");
      auto encoding = hex_field(j, "encoding");
      if (!address || !encoding) return fail(line_no, "bad clone record");
      segment->clones[*address] = *encoding;
    } else if (record == "tx") {
      if (!segment) return fail(line_no, "tx outside segment");
      auto wire = hex_field(j, "wire");
      if (!wire) return fail(line_no, "bad tx wire");
      auto tx = decode_transaction(*wire);
      if (!tx) return fail(line_no, "undecodable tx wire");
      const unsigned code = j.value("status", unsigned{255});
      auto pre = hash_field(j, "pre");
      auto post = hash_field(j, "post");
      if (code > static_cast<unsigned>(TxStatus::invalid_transaction) || !pre || !post ||
          !j.contains("fee_exempt") || !j["fee_exempt"].is_boolean())
        return fail(line_no, "bad tx record");
      segment->txs.push_back(
          LoggedTx{*tx, static_cast<TxStatus>(code), j["fee_exempt"].get<bool>(), *pre, *post});
    } else if (record == "segment_end") {
      if (!segment) return fail(line_no, "segment_end outside segment");
      auto hash = hash_field(j, "segment_hash");
      if (!hash || !j.contains("end_commit") || !j["end_commit"].is_number_unsigned())
        return fail(line_no, "bad segment_end record");
      segment->end_commit = j["end_commit"].get<std::uint64_t>();
      segment->segment_hash = *hash;
      segment->closed = true;
      segment = nullptr;
    } else if (record == "commit") {
      auto raw = hex_field(j, "data");
      if (!raw) return fail(line_no, "bad commit record");
      auto commit = decode_commit_record(*raw);
      if (!commit) return fail(line_no, "undecodable commit record");
      commit->base_slot = j.value("base_slot", std::uint64_t{0});
      archive.commits.push_back(std::move(*commit));
    } else {
      return fail(line_no, "unknown record kind '" + record + "'");
    }
  }
  if (!saw_session) return fail(line_no, "missing session header");
  return archive;
}

}  // namespace ephemera
