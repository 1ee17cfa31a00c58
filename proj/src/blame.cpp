#include "dissent/blame.hpp"

#include <algorithm>
#include <map>
#include <tuple>

#include "dissent/tamper_log.hpp"

namespace dissent {

const char* to_string(FaultCategory c) {
  switch (c) {
    case FaultCategory::bad_key: return "bad_key";
    case FaultCategory::bad_submission: return "bad_submission";
    case FaultCategory::bad_shuffle_step: return "bad_shuffle_step";
    case FaultCategory::false_nogo: return "false_nogo";
    case FaultCategory::wrong_hash: return "wrong_hash";
    case FaultCategory::bad_secondary_key: return "bad_secondary_key";
    case FaultCategory::equivocation: return "equivocation";
    case FaultCategory::corrupt_slot: return "corrupt_slot";
  }
  return "unknown";
}

std::set<FaultCategory> BlameVerdict::categories_of(MemberId m) const {
  std::set<FaultCategory> out;
  for (const auto& f : findings)
    if (f.member == m) out.insert(f.category);
  return out;
}

void BlameVerdict::add(Finding f) {
  for (const auto& g : findings)
    if (g.member == f.member && g.category == f.category) return;
  exposed.insert(f.member);
  findings.push_back(std::move(f));
}

void BlameVerdict::merge(const BlameVerdict& other) {
  for (const auto& f : other.findings) add(f);
}

IncompleteEvidence::IncompleteEvidence(std::vector<MemberId> missing)
    : Error(ErrorCode::IncompleteEvidence, "blame evidence incomplete"), missing_(std::move(missing)) {}

std::size_t shuffle_item_size(std::size_t datum_length, std::size_t n, std::size_t position) {
  return datum_length + crypto::kCiphertextOverhead * (2 * n - position);
}

namespace {

using Key = std::tuple<MemberId, std::uint8_t, std::uint8_t>;

struct Entry {
  Frame frame;
  Bytes raw;
};

struct MemberEvidence {
  std::optional<Bytes> inner;
  std::optional<crypto::RandomnessTrace> trace;
  std::map<Key, Bytes> view;
};

class Verifier {
 public:
  Verifier(const RoundConfig& config, ByteView nonce, std::size_t L)
      : cfg_(config), nonce_(nonce.begin(), nonce.end()), L_(L), n_(config.size()) {}

  BlameVerdict run(const std::vector<Frame>& evidence_frames) {
    collect(evidence_frames);
    check_equivocation();
    check_keys();
    check_submissions();
    check_steps();
    check_go();
    check_release();
    std::vector<MemberId> missing;
    for (const auto& p : cfg_.participants)
      if (!evidence_.count(p.id)) missing.push_back(p.id);
    if (verdict_.empty() && !missing.empty()) throw IncompleteEvidence(std::move(missing));
    return verdict_;
  }

 private:
  MemberId member_at(std::size_t pos) const { return cfg_.participants[pos].id; }

  std::optional<Frame> admit(const Bytes& raw) {
    Frame f;
    try {
      f = Frame::decode(raw);
    } catch (const Error&) {
      return std::nullopt;
    }
    if (f.nonce != nonce_ || !f.is_protocol()) return std::nullopt;
    auto p = cfg_.position(f.sender);
    if (!p || !f.verify(cfg_.participants[*p].signing_public)) return std::nullopt;
    auto& bucket = pool_[Key{f.sender, f.phase, f.subphase}];
    bool known = std::any_of(bucket.begin(), bucket.end(), [&](const Entry& e) { return e.raw == raw; });
    if (!known) bucket.push_back(Entry{f, raw});
    return f;
  }

  void collect(const std::vector<Frame>& evidence_frames) {
    for (const auto& ef : evidence_frames) {
      Bytes raw = ef.encode();
      auto f = admit(raw);
      if (!f || f->phase != phase::finish || f->subphase != subphase::blame) continue;
      if (evidence_.count(f->sender)) continue;
      try {
        auto ev = decode_evidence(f->payload);
        auto entries = decode_transcript(nonce_, ev.transcript);
        if (!verify_transcript(nonce_, entries, f->log_head)) continue;
        MemberEvidence me;
        me.inner = std::move(ev.inner);
        me.trace = std::move(ev.trace);
        for (const auto& e : entries) {
          auto g = admit(e.message);
          if (!g) continue;
          me.view.emplace(Key{g->sender, g->phase, g->subphase}, e.message);
        }
        evidence_.emplace(f->sender, std::move(me));
      } catch (const Error&) {
        continue;
      }
    }
    std::vector<Bytes> reports;
    for (const auto& [key, bucket] : pool_)
      if (std::get<1>(key) == phase::finish && std::get<2>(key) == subphase::fault_report)
        for (const auto& e : bucket) reports.push_back(e.frame.payload);
    for (const auto& payload : reports) {
      try {
        auto rep = decode_fault_report(payload);
        if (rep.kind != ReportKind::equivocation) continue;
        admit(rep.proof_a);
        admit(rep.proof_b);
      } catch (const Error&) {
      }
    }
  }

  const Entry* get(MemberId sender, std::uint8_t ph, std::uint8_t sub, std::optional<MemberId> viewer = {}) const {
    Key k{sender, ph, sub};
    auto pit = pool_.find(k);
    if (pit == pool_.end() || pit->second.empty()) return nullptr;
    if (viewer) {
      auto eit = evidence_.find(*viewer);
      if (eit != evidence_.end()) {
        auto vit = eit->second.view.find(k);
        if (vit != eit->second.view.end())
          for (const auto& e : pit->second)
            if (e.raw == vit->second) return &e;
      }
    }
    return &pit->second.front();
  }

  void expose(MemberId m, FaultCategory c, std::string detail, std::vector<const Entry*> proof) {
    Finding f{m, c, std::move(detail), {}};
    for (const auto* e : proof)
      if (e) f.proof.push_back(e->raw);
    verdict_.add(std::move(f));
  }

  void check_equivocation() {
    for (const auto& [key, bucket] : pool_)
      if (bucket.size() > 1)
        expose(std::get<0>(key), FaultCategory::equivocation,
               "two signed frames for phase " + std::to_string(std::get<1>(key)), {&bucket[0], &bucket[1]});
  }

  void check_keys() {
    for (std::size_t i = 0; i < n_; ++i) {
      const Entry* z = get(member_at(i), phase::keys, subphase::none);
      if (z && !crypto::is_valid_public_key(z->frame.payload))
        expose(member_at(i), FaultCategory::bad_key, "invalid secondary public key", {z});
    }
  }

  void check_submissions() {
    auto ys = cfg_.primary_publics();
    for (std::size_t i = 0; i < n_; ++i) {
      MemberId j = member_at(i);
      const Entry* c = get(j, phase::submit, subphase::none);
      auto eit = evidence_.find(j);
      if (!c || eit == evidence_.end()) continue;
      const auto& ev = eit->second;
      const Entry* evidence_frame = get(j, phase::finish, subphase::blame);
      if (!ev.inner || !ev.trace) {
        if (!get(j, phase::finish, subphase::decryption))
          expose(j, FaultCategory::bad_submission, "withheld phase-2 randomness", {c, evidence_frame});
        continue;
      }
      std::vector<Bytes> layers;
      try {
        layers = crypto::onion_layers(ys, *ev.inner, *ev.trace);
      } catch (const Error&) {
        layers.clear();
      }
      if (layers.empty() || layers.front() != c->frame.payload) {
        expose(j, FaultCategory::bad_submission, "revealed randomness does not replay the submission",
               {c, evidence_frame});
        continue;
      }
      if (ev.inner->size() != shuffle_item_size(L_, n_, n_)) {
        expose(j, FaultCategory::bad_submission, "inner ciphertext has the wrong width", {c, evidence_frame});
        continue;
      }
      known_.emplace(j, std::move(layers));
    }
    for (std::size_t t = 0; t <= n_; ++t) {
      std::map<Bytes, MemberId> seen;
      for (const auto& [j, layers] : known_) {
        auto [it, fresh] = seen.emplace(layers[t], j);
        if (!fresh) {
          for (MemberId m : {it->second, j})
            expose(m, FaultCategory::bad_submission, "submission collides with another member's at layer " +
                                                         std::to_string(t),
                   {get(it->second, phase::submit, subphase::none), get(j, phase::submit, subphase::none)});
        }
      }
    }
  }

  // The input member at `pos` consumed, as seen in its own transcript.
  std::optional<std::vector<Bytes>> step_input(std::size_t pos, bool& malformed,
                                               std::vector<const Entry*>& proof) const {
    MemberId m = member_at(pos);
    malformed = false;
    if (pos == 0) {
      std::vector<Bytes> items;
      for (std::size_t i = 0; i < n_; ++i) {
        const Entry* c = get(member_at(i), phase::submit, subphase::none, m);
        if (!c) return std::nullopt;
        proof.push_back(c);
        items.push_back(c->frame.payload);
      }
      return items;
    }
    const Entry* in = get(member_at(pos - 1), phase::anonymize, subphase::none, m);
    if (!in) return std::nullopt;
    proof.push_back(in);
    try {
      return decode_vector(in->frame.payload);
    } catch (const Error&) {
      malformed = true;
      return std::nullopt;
    }
  }

  void check_steps() {
    for (std::size_t pos = 0; pos < n_; ++pos) {
      MemberId m = member_at(pos);
      bool malformed_input = false;
      std::vector<const Entry*> in_proof;
      auto input = step_input(pos, malformed_input, in_proof);

      if (const Entry* out = get(m, phase::anonymize, subphase::none, m)) {
        auto proof = in_proof;
        proof.push_back(out);
        std::vector<Bytes> items;
        bool ok = true;
        try {
          items = decode_vector(out->frame.payload);
        } catch (const Error&) {
          ok = false;
        }
        const std::size_t width = shuffle_item_size(L_, n_, pos + 1);
        ok = ok && items.size() == n_ &&
             std::all_of(items.begin(), items.end(), [&](const Bytes& b) { return b.size() == width; });
        if (!ok) {
          expose(m, FaultCategory::bad_shuffle_step, "output vector malformed", proof);
        } else if (input) {
          std::map<Bytes, int> in_count, out_count;
          for (const auto& x : *input) ++in_count[x];
          for (const auto& x : items) ++out_count[x];
          for (const auto& [j, layers] : known_) {
            auto it = in_count.find(layers[pos]);
            if (it == in_count.end() || it->second == 0) continue;
            --it->second;
            auto ot = out_count.find(layers[pos + 1]);
            if (ot == out_count.end() || ot->second == 0) {
              expose(m, FaultCategory::bad_shuffle_step,
                     "output omits the peeled ciphertext of member " + std::to_string(j), proof);
              break;
            }
            --ot->second;
          }
        }
      }

      const Entry* rep_frame = get(m, phase::finish, subphase::fault_report);
      if (!rep_frame) continue;
      FaultReport rep;
      try {
        rep = decode_fault_report(rep_frame->frame.payload);
      } catch (const Error&) {
        expose(m, FaultCategory::false_nogo, "unparseable fault report", {rep_frame});
        continue;
      }
      auto proof = in_proof;
      proof.push_back(rep_frame);
      std::optional<bool> valid;
      switch (rep.kind) {
        case ReportKind::duplicate:
          if (input)
            valid = rep.index_a != rep.index_b && rep.index_a < input->size() && rep.index_b < input->size() &&
                    (*input)[rep.index_a] == (*input)[rep.index_b];
          break;
        case ReportKind::invalid_ciphertext:
          if (input) {
            bool decryptable = false;
            if (rep.index_a < input->size())
              for (const auto& [j, layers] : known_) decryptable = decryptable || layers[pos] == (*input)[rep.index_a];
            valid = rep.index_a < input->size() && !decryptable;
          }
          break;
        case ReportKind::malformed_vector:
          if (malformed_input) {
            valid = true;
          } else if (input) {
            const std::size_t width = shuffle_item_size(L_, n_, pos);
            valid = input->size() != n_ ||
                    !std::all_of(input->begin(), input->end(), [&](const Bytes& b) { return b.size() == width; });
          }
          break;
        case ReportKind::equivocation: valid = valid_equivocation_proof(rep); break;
      }
      if (valid && !*valid) expose(m, FaultCategory::false_nogo, std::string("false fault report: ") + to_string(rep.kind), proof);
    }
  }

  bool valid_equivocation_proof(const FaultReport& rep) const {
    try {
      Frame a = Frame::decode(rep.proof_a), b = Frame::decode(rep.proof_b);
      auto p = cfg_.position(rep.accused);
      if (!p) return false;
      const auto& key = cfg_.participants[*p].signing_public;
      return rep.proof_a != rep.proof_b && a.sender == rep.accused && b.sender == rep.accused &&
             a.nonce == nonce_ && b.nonce == nonce_ && a.phase == b.phase && a.subphase == b.subphase &&
             a.verify(key) && b.verify(key);
    } catch (const Error&) {
      return false;
    }
  }

  void check_go() {
    MemberId last = member_at(n_ - 1);
    for (std::size_t i = 0; i < n_; ++i) {
      MemberId j = member_at(i);
      const Entry* g = get(j, phase::verify, subphase::none, j);
      if (!g) continue;
      const Entry* fin = get(last, phase::anonymize, subphase::none, j);
      GoNoGo go;
      try {
        go = decode_go(g->frame.payload);
      } catch (const Error&) {
        expose(j, FaultCategory::wrong_hash, "unparseable go/no-go message", {g});
        continue;
      }
      if (!fin) continue;
      std::vector<Bytes> items;
      try {
        items = decode_vector(fin->frame.payload);
      } catch (const Error&) {
        continue;
      }
      if (go.digest != crypto::hash(encode_vector(items)))
        expose(j, FaultCategory::wrong_hash, "digest differs from the final vector it received", {g, fin});
      auto kit = known_.find(j);
      if (!go.go && kit != known_.end() &&
          std::find(items.begin(), items.end(), kit->second.back()) != items.end())
        expose(j, FaultCategory::false_nogo, "no-go although its ciphertext is present",
               {g, fin, get(j, phase::submit, subphase::none), get(j, phase::finish, subphase::blame)});
    }
  }

  void check_release() {
    for (std::size_t i = 0; i < n_; ++i) {
      MemberId j = member_at(i);
      const Entry* w = get(j, phase::finish, subphase::decryption);
      const Entry* z = get(j, phase::keys, subphase::none);
      if (w && z && !crypto::matches(w->frame.payload, z->frame.payload))
        expose(j, FaultCategory::bad_secondary_key, "released key does not match its public key", {w, z});
    }
  }

  const RoundConfig& cfg_;
  Bytes nonce_;
  std::size_t L_;
  std::size_t n_;
  std::map<Key, std::vector<Entry>> pool_;
  std::map<MemberId, MemberEvidence> evidence_;
  std::map<MemberId, std::vector<Bytes>> known_;
  BlameVerdict verdict_;
};

}  // namespace

BlameVerdict verify_blame(const RoundConfig& config, ByteView instance_nonce, std::size_t datum_length,
                          const std::vector<Frame>& evidence_frames) {
  Verifier v(config, instance_nonce, datum_length);
  return v.run(evidence_frames);
}

}  // namespace dissent
