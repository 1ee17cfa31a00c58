#include "dissent/tcp.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <chrono>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

namespace dissent {

namespace {

using Clock = std::chrono::steady_clock;

const Bytes& hello_nonce() {
  static const Bytes n = to_bytes("dissent-hello");
  return n;
}

bool write_all(int fd, const std::uint8_t* p, std::size_t n) {
  while (n > 0) {
    ssize_t w = ::send(fd, p, n, MSG_NOSIGNAL);
    if (w < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    p += w;
    n -= static_cast<std::size_t>(w);
  }
  return true;
}

int connect_to(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0) return -1;
  int fd = -1;
  for (addrinfo* a = res; a; a = a->ai_next) {
    fd = ::socket(a->ai_family, a->ai_socktype, a->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, a->ai_addr, a->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  freeaddrinfo(res);
  if (fd >= 0) {
    int one = 1;
    setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  }
  return fd;
}

struct InboxItem {
  enum class Kind : std::uint8_t { frame, lost } kind = Kind::frame;
  MemberId peer = 0;
  Bytes bytes;
};

class TcpEndpoint : public Link {
 public:
  struct Event {
    enum class Kind : std::uint8_t { item, timer, idle } kind = Kind::idle;
    InboxItem item;
    std::uint64_t token = 0;
  };

  TcpEndpoint(const SessionConfig& session, const Credentials& creds, int listen_fd)
      : session_(session), creds_(creds), listen_fd_(listen_fd), start_(Clock::now()) {}

  ~TcpEndpoint() override {
    stopping_ = true;
    ::shutdown(listen_fd_, SHUT_RDWR);
    {
      std::lock_guard<std::mutex> lk(fds_mu_);
      for (auto& [id, fd] : fds_) ::shutdown(fd, SHUT_RDWR);
      for (int fd : pending_fds_) ::shutdown(fd, SHUT_RDWR);
    }
    std::vector<std::thread> threads;
    {
      std::lock_guard<std::mutex> lk(threads_mu_);
      threads.swap(threads_);
    }
    for (auto& t : threads) t.join();
    std::lock_guard<std::mutex> lk(fds_mu_);
    for (auto& [id, fd] : fds_) ::close(fd);
    ::close(listen_fd_);
  }

  void connect_all(std::uint64_t timeout_ms) {
    spawn([this] { accept_loop(); });
    auto deadline = start_ + std::chrono::milliseconds(timeout_ms);
    for (const auto& r : session_.roster) {
      if (r.id <= creds_.id) continue;
      spawn([this, r, deadline] {
        while (!stopping_ && Clock::now() < deadline) {
          int fd = connect_to(r.host, r.port);
          if (fd >= 0) {
            Bytes hello = wire_encode(make_frame(hello_nonce(), phase::control, subphase::hello, creds_.id, LogHead{},
                                                 {}, creds_.signing.secret)
                                          .encode());
            if (!write_all(fd, hello.data(), hello.size())) {
              ::close(fd);
              continue;
            }
            register_peer(r.id, fd);
            reader(fd, r.id);
            return;
          }
          std::this_thread::sleep_for(std::chrono::milliseconds(50));
        }
      });
    }
    std::unique_lock<std::mutex> lk(fds_mu_);
    fds_cv_.wait_until(lk, deadline, [&] { return fds_.size() + 1 >= session_.roster.size(); });
  }

  void send(Envelope e) override {
    Bytes wire = wire_encode(e.frame);
    int fd = -1;
    {
      std::lock_guard<std::mutex> lk(fds_mu_);
      auto it = fds_.find(e.to);
      if (it != fds_.end()) fd = it->second;
    }
    std::string phase = phase_name(peek_phase(e.frame));
    counters_.sent[phase] += wire.size();
    std::lock_guard<std::mutex> lk(write_mu_);
    if (fd < 0 || !write_all(fd, wire.data(), wire.size())) counters_.dropped += wire.size();
  }

  void schedule(std::uint64_t delay_us, std::uint64_t token) override {
    timers_.emplace(Clock::now() + std::chrono::microseconds(delay_us), std::make_pair(generation_, token));
  }

  std::uint64_t now_us() const override {
    return static_cast<std::uint64_t>(
        std::chrono::duration_cast<std::chrono::microseconds>(Clock::now() - start_).count());
  }

  // Drops timers belonging to the previous round's node.
  void new_generation() {
    ++generation_;
    timers_.clear();
  }

  Event next(std::chrono::milliseconds max_wait) {
    auto now = Clock::now();
    if (!timers_.empty() && timers_.begin()->first <= now) {
      auto [gen, token] = timers_.begin()->second;
      timers_.erase(timers_.begin());
      Event ev;
      ev.kind = gen == generation_ ? Event::Kind::timer : Event::Kind::idle;
      ev.token = token;
      return ev;
    }
    auto wake = now + max_wait;
    if (!timers_.empty()) wake = std::min(wake, timers_.begin()->first);
    std::unique_lock<std::mutex> lk(inbox_mu_);
    inbox_cv_.wait_until(lk, wake, [&] { return !inbox_.empty(); });
    if (inbox_.empty()) return Event{};
    Event ev;
    ev.kind = Event::Kind::item;
    ev.item = std::move(inbox_.front());
    inbox_.pop_front();
    lk.unlock();
    if (ev.item.kind == InboxItem::Kind::frame)
      counters_.received[phase_name(peek_phase(ev.item.bytes))] += ev.item.bytes.size() + 4;
    return ev;
  }

  std::set<MemberId> connected() const {
    std::lock_guard<std::mutex> lk(fds_mu_);
    std::set<MemberId> out;
    for (const auto& [id, fd] : fds_) out.insert(id);
    return out;
  }

  MemberCounters take_counters() {
    MemberCounters c = std::move(counters_);
    counters_ = MemberCounters{};
    return c;
  }

  static std::uint8_t peek_phase(const Bytes& frame) {
    if (frame.size() < 5) return 0xFF;
    std::size_t len = (std::size_t{frame[1]} << 24) | (std::size_t{frame[2]} << 16) | (std::size_t{frame[3]} << 8) |
                      frame[4];
    return frame.size() < 6 + len ? 0xFF : frame[5 + len];
  }

 private:
  void spawn(std::function<void()> fn) {
    std::lock_guard<std::mutex> lk(threads_mu_);
    threads_.emplace_back(std::move(fn));
  }

  void register_peer(MemberId id, int fd) {
    {
      std::lock_guard<std::mutex> lk(fds_mu_);
      pending_fds_.erase(std::remove(pending_fds_.begin(), pending_fds_.end(), fd), pending_fds_.end());
      if (auto it = fds_.find(id); it != fds_.end()) ::shutdown(it->second, SHUT_RDWR);
      fds_[id] = fd;
    }
    fds_cv_.notify_all();
  }

  void push(InboxItem item) {
    {
      std::lock_guard<std::mutex> lk(inbox_mu_);
      inbox_.push_back(std::move(item));
    }
    inbox_cv_.notify_one();
  }

  void accept_loop() {
    while (!stopping_) {
      int fd = ::accept(listen_fd_, nullptr, nullptr);
      if (fd < 0) {
        if (errno == EINTR) continue;
        return;
      }
      int one = 1;
      setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      {
        std::lock_guard<std::mutex> lk(fds_mu_);
        pending_fds_.push_back(fd);
      }
      spawn([this, fd] { reader(fd, std::nullopt); });
    }
  }

  void reader(int fd, std::optional<MemberId> peer) {
    WireDecoder dec;
    std::uint8_t buf[1 << 16];
    for (;;) {
      ssize_t n = ::recv(fd, buf, sizeof buf, 0);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) break;
      try {
        dec.feed(ByteView(buf, static_cast<std::size_t>(n)));
        while (auto frame = dec.next()) {
          if (!peer) {
            Frame f = Frame::decode(*frame);
            const RosterEntry* r = session_.find(f.sender);
            if (f.phase != phase::control || f.subphase != subphase::hello || f.nonce != hello_nonce() || !r ||
                !f.verify(r->signing_public)) {
              ::shutdown(fd, SHUT_RDWR);
              break;
            }
            peer = f.sender;
            register_peer(*peer, fd);
            continue;
          }
          push(InboxItem{InboxItem::Kind::frame, *peer, std::move(*frame)});
        }
      } catch (const Error&) {
        break;
      }
    }
    if (peer) {
      bool current = false;
      {
        std::lock_guard<std::mutex> lk(fds_mu_);
        auto it = fds_.find(*peer);
        if (it != fds_.end() && it->second == fd) {
          fds_.erase(it);
          current = true;
        }
      }
      if (current) {
        ::close(fd);
        if (!stopping_) push(InboxItem{InboxItem::Kind::lost, *peer, {}});
      }
    } else {
      std::lock_guard<std::mutex> lk(fds_mu_);
      pending_fds_.erase(std::remove(pending_fds_.begin(), pending_fds_.end(), fd), pending_fds_.end());
      ::close(fd);
    }
  }

  const SessionConfig& session_;
  const Credentials& creds_;
  int listen_fd_;
  Clock::time_point start_;
  std::atomic<bool> stopping_{false};

  mutable std::mutex fds_mu_;
  std::condition_variable fds_cv_;
  std::map<MemberId, int> fds_;
  std::vector<int> pending_fds_;
  std::mutex write_mu_;

  std::mutex threads_mu_;
  std::vector<std::thread> threads_;

  std::mutex inbox_mu_;
  std::condition_variable inbox_cv_;
  std::deque<InboxItem> inbox_;

  std::uint64_t generation_ = 0;
  std::multimap<Clock::time_point, std::pair<std::uint64_t, std::uint64_t>> timers_;
  MemberCounters counters_;
};

// end_session payloads: 0 = a member finished the round, 1 = session over.
constexpr std::uint8_t kRoundDone = 0;
constexpr std::uint8_t kSessionOver = 1;

class Host {
 public:
  Host(const TcpHostOptions& o, TcpEndpoint& ep) : o_(o), ep_(ep), leader_id_(leader_of(o.session)) {}

  TcpSessionResult run() {
    if (o_.lead) lead();
    else follow();
    return std::move(result_);
  }

 private:
  static MemberId leader_of(const SessionConfig& s) { return s.leader.value_or(s.roster.front().id); }

  NodeOptions node_options() const {
    NodeOptions n;
    n.timeout_us = o_.session.timeout_ms * 1000;
    n.quorum = o_.session.quorum;
    return n;
  }

  void new_node() {
    ep_.new_generation();
    ep_.take_counters();
    crypto::Rng base = crypto::Rng::from_u64(o_.seed).fork("round-" + std::to_string(round_));
    node_.reset();
    adversary_.reset();
    if (o_.fault && (!o_.fault->round || *o_.fault->round == round_)) {
      auto board = std::make_shared<CollusionBoard>();
      board->shared_seed = crypto::Rng::from_u64(o_.seed).fork("collusion-" + std::to_string(round_)).seed_bytes();
      adversary_ = std::make_unique<Adversary>(*o_.fault, base.fork("adversary-" + std::to_string(o_.creds.id)), board);
    }
    node_ = std::make_unique<ParticipantNode>(o_.creds, ep_, base.fork("node-" + std::to_string(o_.creds.id)),
                                              node_options(), adversary_.get());
    node_->set_datum(o_.message);
    reported_ = false;
    done_.clear();
    ++round_;
  }

  bool belongs(const Bytes& nonce) const {
    if (!node_ || node_->round_nonce().empty()) return false;
    const Bytes& r = node_->round_nonce();
    return nonce == r || nonce == descriptor_nonce(r) || nonce == accusation_nonce(r);
  }

  void replay_stash() {
    auto stash = std::move(stash_);
    stash_.clear();
    for (auto& e : stash) {
      Frame f = Frame::decode(e.frame);
      if (belongs(f.nonce)) node_->on_envelope(e);
      else stash_.push_back(std::move(e));
    }
  }

  void send_end(MemberId to, std::uint8_t kind, bool delivered) {
    ByteWriter w;
    w.u8(kind).u8(delivered ? 1 : 0).blob(node_ ? node_->round_nonce() : Bytes{});
    Bytes nonce = node_ ? node_->round_nonce() : hello_nonce();
    if (nonce.empty()) nonce = hello_nonce();
    Envelope e;
    e.from = o_.creds.id;
    e.to = to;
    e.frame = make_frame(nonce, phase::control, subphase::end_session, o_.creds.id, LogHead{}, std::move(w).take(),
                         o_.creds.signing.secret)
                  .encode();
    ep_.send(std::move(e));
  }

  void dispatch(const TcpEndpoint::Event& ev) {
    if (ev.kind == TcpEndpoint::Event::Kind::timer) {
      if (node_) node_->on_timer(ev.token);
      return;
    }
    if (ev.kind != TcpEndpoint::Event::Kind::item) return;
    const InboxItem& it = ev.item;
    if (it.kind == InboxItem::Kind::lost) {
      result_.lost.insert(it.peer);
      if (node_) node_->on_connection_lost(it.peer);
      if (!o_.lead && it.peer == leader_id_) session_over_ = true;
      return;
    }
    Frame f;
    try {
      f = Frame::decode(it.bytes);
    } catch (const Error&) {
      return;
    }
    if (f.phase == phase::control && f.subphase == subphase::hello) return;
    if (f.phase == phase::control && f.subphase == subphase::end_session) {
      const RosterEntry* r = o_.session.find(f.sender);
      if (!r || !f.verify(r->signing_public)) return;
      try {
        ByteReader rd(f.payload);
        auto kind = rd.u8();
        bool delivered = rd.u8() != 0;
        Bytes nonce = rd.blob_copy(kMaxNonceSize);
        if (kind == kSessionOver && f.sender == leader_id_) session_over_ = true;
        if (kind == kRoundDone && o_.lead && node_ && nonce == node_->round_nonce()) done_[f.sender] = delivered;
      } catch (const Error&) {
      }
      return;
    }
    Envelope e;
    e.from = it.peer;
    e.to = o_.creds.id;
    e.frame = it.bytes;
    if (f.phase == phase::announce && !o_.lead && (!node_ || f.nonce != node_->round_nonce())) {
      new_node();
      node_->on_envelope(e);
      replay_stash();
      return;
    }
    if (belongs(f.nonce)) node_->on_envelope(e);
    else if (stash_.size() < 65536) stash_.push_back(std::move(e));
  }

  void record_round(bool delivered) {
    TcpRoundRecord rec;
    if (node_->config()) rec.config = *node_->config();
    rec.outcome = node_->outcome();
    rec.counters = ep_.take_counters();
    rec.emitted = node_->emitted();
    rec.suspicions = node_->suspicions_raised();
    rec.delivered = delivered;
    result_.rounds.push_back(std::move(rec));
  }

  bool self_delivered() const {
    return node_->config() && own_message_delivered(node_->outcome(), node_->config()->protocol, o_.message);
  }

  void follow() {
    auto last_activity = Clock::now();
    const auto idle = std::chrono::milliseconds(o_.idle_timeout_ms);
    while (!session_over_) {
      auto ev = ep_.next(std::chrono::milliseconds(100));
      if (ev.kind == TcpEndpoint::Event::Kind::item) last_activity = Clock::now();
      dispatch(ev);
      if (node_ && node_->finished() && !reported_) {
        reported_ = true;
        bool d = self_delivered();
        record_round(d);
        send_end(leader_id_, kRoundDone, d);
      }
      if (Clock::now() - last_activity > idle) {
        result_.error = ErrorCode::ConnectionLost;
        break;
      }
    }
    if (!result_.rounds.empty()) result_.delivered = result_.rounds.back().delivered;
  }

  void lead() {
    Membership membership = o_.session.membership();
    if (!o_.state_file.empty()) membership.exclude(load_exclusions(o_.state_file));
    NonceSource nonces(o_.creds.id, crypto::Rng::from_u64(o_.seed).fork("session-nonces"));
    const auto T = std::chrono::milliseconds(o_.session.timeout_ms);

    for (std::uint32_t r = 0; r < std::max<std::uint32_t>(1, o_.session.rounds_budget); ++r) {
      auto connected = ep_.connected();
      std::vector<MemberId> roster;
      for (const auto& p : membership.eligible())
        if (p.id == o_.creds.id || (connected.count(p.id) && !result_.lost.count(p.id))) roster.push_back(p.id);
      RoundConfig cfg;
      try {
        cfg = initiate_round(o_.creds.id, membership, roster, o_.session.protocol, o_.session.msg_len, nonces);
      } catch (const Error& e) {
        result_.error = e.code();
        break;
      }
      if (r == 0 && o_.fixed_nonce) cfg.nonce = *o_.fixed_nonce;
      new_node();
      node_->lead(cfg);
      replay_stash();

      std::optional<Clock::time_point> finished_at;
      for (;;) {
        bool all_done = node_->finished();
        for (auto id : roster)
          if (id != o_.creds.id && !done_.count(id) && !result_.lost.count(id)) all_done = false;
        if (all_done) break;
        if (node_->finished() && !finished_at) finished_at = Clock::now();
        if (finished_at && Clock::now() - *finished_at > T) break;
        dispatch(ep_.next(std::chrono::milliseconds(100)));
      }
      bool self_ok = self_delivered();
      record_round(self_ok);

      std::set<MemberId> excl = exclusions_after_outcome(node_->outcome());
      for (auto id : roster)
        if (result_.lost.count(id)) excl.insert(id);
      membership.exclude(excl);
      if (!o_.state_file.empty()) save_exclusions(o_.state_file, membership.excluded);

      bool everyone = self_ok;
      for (auto id : roster) {
        if (id == o_.creds.id || membership.excluded.count(id)) continue;
        auto d = done_.find(id);
        if (d == done_.end() || !d->second) everyone = false;
      }
      result_.rounds.back().delivered = everyone;
      if (everyone) {
        result_.delivered = true;
        break;
      }
    }
    result_.excluded = membership.excluded;
    for (const auto& p : o_.session.roster)
      if (p.id != o_.creds.id) send_end(p.id, kSessionOver, result_.delivered);
  }

  static std::set<MemberId> exclusions_after_outcome(const NodeOutcome& o) {
    std::set<MemberId> out(o.verdict.exposed.begin(), o.verdict.exposed.end());
    out.insert(o.incomplete.begin(), o.incomplete.end());
    if (o.status == RoundStatus::stalled) out.insert(o.failed.begin(), o.failed.end());
    return out;
  }

  const TcpHostOptions& o_;
  TcpEndpoint& ep_;
  MemberId leader_id_;
  std::unique_ptr<Adversary> adversary_;
  std::unique_ptr<ParticipantNode> node_;
  std::uint32_t round_ = 0;
  std::vector<Envelope> stash_;
  std::map<MemberId, bool> done_;
  bool reported_ = false;
  bool session_over_ = false;
  TcpSessionResult result_;
};

}  // namespace

int bind_listener(const std::string& host, std::uint16_t port, std::uint16_t* bound_port) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  if (getaddrinfo(host.empty() ? nullptr : host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0)
    throw Error(ErrorCode::Config, "cannot resolve " + host);
  int fd = -1;
  for (addrinfo* a = res; a; a = a->ai_next) {
    fd = ::socket(a->ai_family, a->ai_socktype, a->ai_protocol);
    if (fd < 0) continue;
    int one = 1;
    setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(fd, a->ai_addr, a->ai_addrlen) == 0 && ::listen(fd, 64) == 0) break;
    ::close(fd);
    fd = -1;
  }
  freeaddrinfo(res);
  if (fd < 0) throw Error(ErrorCode::ConnectionLost, "cannot listen on " + host + ":" + std::to_string(port));
  if (bound_port) {
    sockaddr_storage ss{};
    socklen_t len = sizeof ss;
    getsockname(fd, reinterpret_cast<sockaddr*>(&ss), &len);
    if (ss.ss_family == AF_INET) *bound_port = ntohs(reinterpret_cast<sockaddr_in*>(&ss)->sin_port);
    else *bound_port = ntohs(reinterpret_cast<sockaddr_in6*>(&ss)->sin6_port);
  }
  return fd;
}

bool own_message_delivered(const NodeOutcome& o, ProtocolKind protocol, const Bytes& message) {
  if (o.status != RoundStatus::completed && o.status != RoundStatus::blamed) return false;
  if (protocol == ProtocolKind::shuffle) {
    for (const auto& m : o.shuffle_output)
      if (m && *m == message) return true;
    return false;
  }
  for (const auto& [slot, m] : o.recovered)
    if (m == message) return true;
  return false;
}

std::set<MemberId> load_exclusions(const std::string& path) {
  std::set<MemberId> out;
  std::ifstream f(path);
  MemberId id;
  while (f >> id) out.insert(id);
  return out;
}

void save_exclusions(const std::string& path, const std::set<MemberId>& ids) {
  std::ofstream f(path, std::ios::trunc);
  for (auto id : ids) f << id << "\n";
  if (!f) throw Error(ErrorCode::Config, "cannot write " + path);
}

TcpSessionResult run_tcp_session(const TcpHostOptions& o) {
  const RosterEntry* self = o.session.find(o.creds.id);
  if (!self) throw Error(ErrorCode::Config, "this member is not in the roster");
  if (self->signing_public != o.creds.signing.public_key || self->primary_public != o.creds.primary.public_key)
    throw Error(ErrorCode::Config, "key file does not match the roster entry");
  if (o.lead && o.session.leader && *o.session.leader != o.creds.id)
    throw Error(ErrorCode::Config, "config names a different leader");
  int fd = o.listen_fd >= 0 ? o.listen_fd : bind_listener(self->host, self->port);
  TcpEndpoint ep(o.session, o.creds, fd);
  ep.connect_all(o.connect_timeout_ms);
  Host host(o, ep);
  return host.run();
}

}  // namespace dissent
