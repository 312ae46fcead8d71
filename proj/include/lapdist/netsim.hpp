// Copyright 2026 The lapdist Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Round-synchronous network simulator.
//
// A run executes step 0 (local computation plus first sends) and then one
// step per communication round. Messages sent in step t are delivered in
// round t+1 and are visible in the inbox of step t+1. The run ends when every
// node has halted and nothing is in flight; `rounds` is the index of the last
// step executed. A halted node is stepped again whenever its inbox is
// non-empty.

#ifndef LAPDIST_NETSIM_HPP_
#define LAPDIST_NETSIM_HPP_

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <ostream>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "json.hpp"

#include "lapdist/graph.hpp"

namespace lapdist {

enum class Model { congest, ncc, hybrid, sequential };
enum class Channel : std::uint8_t { local, global };
enum class DropPolicy { seeded_random, lowest_sender_first };

inline const char* to_string(Model m) {
  switch (m) {
    case Model::congest: return "congest";
    case Model::ncc: return "ncc";
    case Model::hybrid: return "hybrid";
    case Model::sequential: return "sequential";
  }
  return "?";
}

inline Model parse_model(const std::string& s) {
  if (s == "congest") return Model::congest;
  if (s == "ncc") return Model::ncc;
  if (s == "hybrid") return Model::hybrid;
  if (s == "sequential" || s == "sequential-oracle") return Model::sequential;
  throw std::invalid_argument("unknown model '" + s + "'");
}

inline DropPolicy parse_drop_policy(const std::string& s) {
  if (s == "random" || s == "seeded-random") return DropPolicy::seeded_random;
  if (s == "lowest-sender" || s == "lowest-sender-id-first" || s == "worst-case") {
    return DropPolicy::lowest_sender_first;
  }
  throw std::invalid_argument("unknown drop policy '" + s + "'");
}

class netsim_error : public std::runtime_error {
 public:
  enum class Kind { payload_overflow, send_cap, duplicate_edge_send, bad_target, wrong_channel };
  netsim_error(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// ceil(log2 n), at least 1.
inline int ceil_log2(std::int64_t n) {
  int bits = 1;
  while ((std::int64_t{1} << bits) < n) ++bits;
  return bits;
}

using Word = std::int64_t;

/// A message is a short sequence of words; each word is one id-sized
/// quantity of ceil(log2 n_bar) bits for accounting purposes.
class Message {
 public:
  static constexpr int kCapacity = 8;

  Message() = default;
  Message(std::initializer_list<Word> words) {
    for (Word w : words) push(w);
  }

  void push(Word w) {
    if (size_ == kCapacity) {
      throw netsim_error(netsim_error::Kind::payload_overflow, "message exceeds storage capacity");
    }
    words_[static_cast<std::size_t>(size_++)] = w;
  }
  void push_real(double x) { push(std::bit_cast<Word>(x)); }

  int size() const noexcept { return size_; }
  Word operator[](int i) const { return words_[static_cast<std::size_t>(i)]; }
  double real(int i) const { return std::bit_cast<double>(words_[static_cast<std::size_t>(i)]); }

  friend bool operator==(const Message& a, const Message& b) {
    return a.size_ == b.size_ && std::equal(a.words_.begin(), a.words_.begin() + a.size_, b.words_.begin());
  }

 private:
  std::array<Word, kCapacity> words_{};
  int size_ = 0;
};

struct Envelope {
  NodeId from = kNoNode;
  EdgeId edge = kNoEdge;  // kNoEdge for global messages
  Message msg;
};

struct SimOptions {
  int max_rounds = 100000;
  std::uint64_t seed = 1;
  int msg_factor = 4;
  int ncc_cap_factor = 1;
  DropPolicy drop_policy = DropPolicy::seeded_random;
  NodeId n_bar = 0;          // 0: use the network size
  bool record_messages = true;
};

enum class RunStatus { completed, max_rounds_exceeded };

struct DeliveredMessage {
  int round = 0;
  Channel channel = Channel::local;
  NodeId src = kNoNode;
  NodeId dst = kNoNode;
  int bits = 0;
};

inline bool operator<(const DeliveredMessage& a, const DeliveredMessage& b) {
  return std::tie(a.round, a.channel, a.src, a.dst, a.bits) < std::tie(b.round, b.channel, b.src, b.dst, b.bits);
}
inline bool operator==(const DeliveredMessage& a, const DeliveredMessage& b) {
  return std::tie(a.round, a.channel, a.src, a.dst, a.bits) == std::tie(b.round, b.channel, b.src, b.dst, b.bits);
}

/// Message accounting for one run.
struct RoundLedger {
  int rounds = 0;
  RunStatus status = RunStatus::completed;
  int word_bits = 1;
  int message_bits = 4;
  int global_cap = 0;

  std::int64_t local_messages = 0;
  std::int64_t global_messages = 0;
  int rounds_with_local = 0;
  int rounds_with_global = 0;
  int max_local_per_edge_direction = 0;
  int max_global_sent_per_node = 0;
  int max_global_received_per_node = 0;

  std::vector<DeliveredMessage> delivered;  // empty unless record_messages
  std::vector<DeliveredMessage> dropped;

  /// Per-round local message count for every directed edge slot that carried
  /// traffic: key (round, edge id, direction 0 = u->v).
  std::map<std::tuple<int, EdgeId, int>, int> local_edge_counts;

  /// Sequential composition: `next` ran after this ledger's last round.
  void append(const RoundLedger& next) {
    const int offset = rounds;
    rounds += next.rounds;
    if (next.status != RunStatus::completed) status = next.status;
    word_bits = std::max(word_bits, next.word_bits);
    message_bits = std::max(message_bits, next.message_bits);
    global_cap = std::max(global_cap, next.global_cap);
    local_messages += next.local_messages;
    global_messages += next.global_messages;
    rounds_with_local += next.rounds_with_local;
    rounds_with_global += next.rounds_with_global;
    max_local_per_edge_direction = std::max(max_local_per_edge_direction, next.max_local_per_edge_direction);
    max_global_sent_per_node = std::max(max_global_sent_per_node, next.max_global_sent_per_node);
    max_global_received_per_node = std::max(max_global_received_per_node, next.max_global_received_per_node);
    for (auto m : next.delivered) {
      m.round += offset;
      delivered.push_back(m);
    }
    for (auto m : next.dropped) {
      m.round += offset;
      dropped.push_back(m);
    }
    for (const auto& [key, count] : next.local_edge_counts) {
      local_edge_counts[{std::get<0>(key) + offset, std::get<1>(key), std::get<2>(key)}] += count;
    }
  }

  /// Delivered messages in canonical sorted order.
  std::vector<DeliveredMessage> replay() const {
    auto out = delivered;
    std::sort(out.begin(), out.end());
    return out;
  }

  void write_csv(std::ostream& out) const {
    out << "round,channel,src,dst,bits\n";
    for (const auto& m : delivered) {
      out << m.round << ',' << (m.channel == Channel::local ? "local" : "global") << ',' << m.src << ','
          << m.dst << ',' << m.bits << '\n';
    }
  }

  nlohmann::json summary() const {
    return {
        {"rounds", rounds},
        {"status", status == RunStatus::completed ? "completed" : "max_rounds_exceeded"},
        {"word_bits", word_bits},
        {"message_bits", message_bits},
        {"global_cap", global_cap},
        {"local_messages", local_messages},
        {"global_messages", global_messages},
        {"rounds_with_local", rounds_with_local},
        {"rounds_with_global", rounds_with_global},
        {"max_local_per_edge_direction", max_local_per_edge_direction},
        {"max_global_sent_per_node", max_global_sent_per_node},
        {"max_global_received_per_node", max_global_received_per_node},
        {"dropped", dropped.size()},
    };
  }
};

/// What a node program may ask of its environment. The simulator implements
/// it directly; wrappers that multiplex virtual nodes implement it too.
class ContextBackend {
 public:
  virtual ~ContextBackend() = default;
  virtual NodeId backend_size() const = 0;
  virtual std::span<const Incidence> backend_neighbors(NodeId u) const = 0;
  virtual int backend_max_words() const = 0;
  virtual int backend_global_cap() const = 0;
  virtual std::mt19937_64& backend_rng(NodeId u) = 0;
  virtual void backend_send_local(NodeId u, EdgeId e, const Message& m) = 0;
  virtual void backend_send_global(NodeId u, NodeId target, const Message& m) = 0;
};

/// Per-step view handed to a node program.
class NodeContext {
 public:
  NodeContext(ContextBackend* backend, int round, NodeId id, std::span<const Envelope> inbox)
      : backend_(backend), round_(round), id_(id), inbox_(inbox) {}

  int round() const noexcept { return round_; }
  NodeId id() const noexcept { return id_; }
  NodeId network_size() const { return backend_->backend_size(); }
  std::span<const Incidence> neighbors() const { return backend_->backend_neighbors(id_); }
  std::span<const Envelope> inbox() const noexcept { return inbox_; }
  int max_words() const { return backend_->backend_max_words(); }
  int global_cap() const { return backend_->backend_global_cap(); }
  std::mt19937_64& rng() { return backend_->backend_rng(id_); }

  void send_local(EdgeId e, const Message& m) { backend_->backend_send_local(id_, e, m); }
  void send_global(NodeId target, const Message& m) { backend_->backend_send_global(id_, target, m); }
  void halt() noexcept { halted_ = true; }
  bool halted() const noexcept { return halted_; }

 private:
  ContextBackend* backend_;
  int round_;
  NodeId id_;
  std::span<const Envelope> inbox_;
  bool halted_ = false;
};

/// The engine. One instance per run; node programs are any type exposing
/// `void step(NodeContext&)`.
class Simulator final : public ContextBackend {
 public:
  Simulator(Model model, const WeightedGraph* graph, NodeId n, const SimOptions& opt)
      : model_(model), graph_(graph), n_(n), opt_(opt) {
    if ((model == Model::congest || model == Model::hybrid) && graph == nullptr) {
      throw std::invalid_argument("CONGEST/HYBRID runs need a graph");
    }
    const NodeId n_bar = opt.n_bar > 0 ? opt.n_bar : std::max<NodeId>(n, 2);
    ledger_.word_bits = ceil_log2(n_bar);
    ledger_.message_bits = opt.msg_factor * ledger_.word_bits;
    max_words_ = opt.msg_factor;
    global_cap_ = opt.ncc_cap_factor * ledger_.word_bits;
    ledger_.global_cap = (model == Model::ncc || model == Model::hybrid) ? global_cap_ : 0;
    rngs_.reserve(static_cast<std::size_t>(n));
    for (NodeId u = 0; u < n; ++u) {
      std::seed_seq seq{static_cast<std::uint32_t>(opt.seed), static_cast<std::uint32_t>(opt.seed >> 32),
                        static_cast<std::uint32_t>(u), 0x9e3779b9u};
      rngs_.emplace_back(seq);
    }
    drop_rng_.seed(opt.seed ^ 0x5bd1e995ULL);
    inbox_.resize(static_cast<std::size_t>(n));
    next_inbox_.resize(static_cast<std::size_t>(n));
    halted_.assign(static_cast<std::size_t>(n), 0);
    if (graph_ != nullptr) edge_stamp_.assign(2 * graph_->num_edges(), -1);
    sent_global_.assign(static_cast<std::size_t>(n), 0);
  }

  template <class Program>
  RoundLedger run(std::vector<Program>& programs) {
    if (static_cast<NodeId>(programs.size()) != n_) {
      throw std::invalid_argument("one program per node required");
    }
    for (int t = 0;; ++t) {
      round_ = t;
      std::fill(sent_global_.begin(), sent_global_.end(), 0);
      for (NodeId u = 0; u < n_; ++u) {
        auto& box = inbox_[static_cast<std::size_t>(u)];
        if (t > 0 && halted_[static_cast<std::size_t>(u)] && box.empty()) continue;
        NodeContext ctx(this, t, u, box);
        programs[static_cast<std::size_t>(u)].step(ctx);
        halted_[static_cast<std::size_t>(u)] = ctx.halted() ? 1 : 0;
      }
      const bool in_flight = deliver(t + 1);
      const bool all_halted = std::all_of(halted_.begin(), halted_.end(), [](char h) { return h != 0; });
      if (!in_flight && all_halted) {
        ledger_.rounds = t;
        break;
      }
      if (t >= opt_.max_rounds) {
        ledger_.rounds = t;
        ledger_.status = RunStatus::max_rounds_exceeded;
        break;
      }
    }
    return std::move(ledger_);
  }

  NodeId backend_size() const override { return n_; }
  std::span<const Incidence> backend_neighbors(NodeId u) const override {
    if (graph_ == nullptr) return {};
    return graph_->incident(u);
  }
  int backend_max_words() const override { return max_words_; }
  int backend_global_cap() const override { return global_cap_; }
  std::mt19937_64& backend_rng(NodeId u) override { return rngs_[static_cast<std::size_t>(u)]; }
  void backend_send_local(NodeId u, EdgeId e, const Message& m) override { send_local(u, e, m); }
  void backend_send_global(NodeId u, NodeId t, const Message& m) override { send_global(u, t, m); }

 private:
  struct Outgoing {
    NodeId src;
    NodeId dst;
    EdgeId edge;
    Channel channel;
    Message msg;
  };

  void check_payload(const Message& m) const {
    if (m.size() > max_words_) {
      throw netsim_error(netsim_error::Kind::payload_overflow,
                         "payload of " + std::to_string(m.size() * ledger_.word_bits) + " bits exceeds B=" +
                             std::to_string(ledger_.message_bits));
    }
  }

  void send_local(NodeId src, EdgeId e, const Message& m) {
    if (model_ == Model::ncc) throw netsim_error(netsim_error::Kind::wrong_channel, "NCC has no local edges");
    check_payload(m);
    const auto& edge = graph_->edge(e);
    if (edge.u != src && edge.v != src) {
      throw netsim_error(netsim_error::Kind::bad_target, "node does not own edge " + std::to_string(e));
    }
    if (edge.is_self_loop()) throw netsim_error(netsim_error::Kind::bad_target, "send over self-loop");
    const int dir = edge.u == src ? 0 : 1;
    auto& stamp = edge_stamp_[2 * static_cast<std::size_t>(e) + static_cast<std::size_t>(dir)];
    if (stamp == round_) {
      throw netsim_error(netsim_error::Kind::duplicate_edge_send,
                         "second message on edge " + std::to_string(e) + " in one round");
    }
    stamp = round_;
    outgoing_.push_back({src, edge.other(src), e, Channel::local, m});
  }

  void send_global(NodeId src, NodeId dst, const Message& m) {
    if (model_ == Model::congest) throw netsim_error(netsim_error::Kind::wrong_channel, "CONGEST has no global edges");
    check_payload(m);
    if (dst < 0 || dst >= n_) throw netsim_error(netsim_error::Kind::bad_target, "global target out of range");
    auto& count = sent_global_[static_cast<std::size_t>(src)];
    if (++count > global_cap_) {
      throw netsim_error(netsim_error::Kind::send_cap,
                         "node " + std::to_string(src) + " exceeded global send cap " + std::to_string(global_cap_));
    }
    ledger_.max_global_sent_per_node = std::max(ledger_.max_global_sent_per_node, count);
    outgoing_.push_back({src, dst, kNoEdge, Channel::global, m});
  }

  /// Moves this step's outbox into next-round inboxes; returns whether any
  /// message is in flight.
  bool deliver(int round) {
    for (auto& box : inbox_) box.clear();
    if (outgoing_.empty()) return false;
    // Deterministic merge order: sender id, then send order.
    std::stable_sort(outgoing_.begin(), outgoing_.end(),
                     [](const Outgoing& a, const Outgoing& b) { return a.src < b.src; });
    bool any_local = false;
    bool any_global = false;
    std::vector<std::vector<std::size_t>> global_to;
    for (std::size_t i = 0; i < outgoing_.size(); ++i) {
      const auto& o = outgoing_[i];
      if (o.channel == Channel::local) {
        any_local = true;
        record(round, o);
        if (opt_.record_messages) {
          const int dir = graph_->edge(o.edge).u == o.src ? 0 : 1;
          const int c = ++ledger_.local_edge_counts[{round, o.edge, dir}];
          ledger_.max_local_per_edge_direction = std::max(ledger_.max_local_per_edge_direction, c);
        }
        ++ledger_.local_messages;
        next_inbox_[static_cast<std::size_t>(o.dst)].push_back({o.src, o.edge, o.msg});
      } else {
        any_global = true;
        if (global_to.empty()) global_to.resize(static_cast<std::size_t>(n_));
        global_to[static_cast<std::size_t>(o.dst)].push_back(i);
      }
    }
    if (any_global) {
      for (NodeId dst = 0; dst < n_; ++dst) {
        auto& ids = global_to[static_cast<std::size_t>(dst)];
        if (ids.empty()) continue;
        if (static_cast<int>(ids.size()) > global_cap_) {
          if (opt_.drop_policy == DropPolicy::seeded_random) {
            std::shuffle(ids.begin(), ids.end(), drop_rng_);
          }
          // lowest-sender-first keeps the sorted order: low ids win.
          for (std::size_t j = static_cast<std::size_t>(global_cap_); j < ids.size(); ++j) {
            const auto& o = outgoing_[ids[j]];
            ledger_.dropped.push_back({round, Channel::global, o.src, o.dst, o.msg.size() * ledger_.word_bits});
          }
          ids.resize(static_cast<std::size_t>(global_cap_));
          std::sort(ids.begin(), ids.end());
        }
        ledger_.max_global_received_per_node =
            std::max(ledger_.max_global_received_per_node, static_cast<int>(ids.size()));
        for (std::size_t i : ids) {
          const auto& o = outgoing_[i];
          record(round, o);
          ++ledger_.global_messages;
          next_inbox_[static_cast<std::size_t>(o.dst)].push_back({o.src, kNoEdge, o.msg});
        }
      }
    }
    ledger_.rounds_with_local += any_local ? 1 : 0;
    ledger_.rounds_with_global += any_global ? 1 : 0;
    outgoing_.clear();
    std::swap(inbox_, next_inbox_);
    return true;
  }

  void record(int round, const Outgoing& o) {
    if (!opt_.record_messages) return;
    ledger_.delivered.push_back({round, o.channel, o.src, o.dst, o.msg.size() * ledger_.word_bits});
  }

  Model model_;
  const WeightedGraph* graph_;
  NodeId n_;
  SimOptions opt_;
  RoundLedger ledger_;
  int max_words_ = 4;
  int global_cap_ = 0;
  int round_ = 0;
  std::vector<std::mt19937_64> rngs_;
  std::mt19937_64 drop_rng_;
  std::vector<std::vector<Envelope>> inbox_;
  std::vector<std::vector<Envelope>> next_inbox_;
  std::vector<char> halted_;
  std::vector<int> edge_stamp_;
  std::vector<int> sent_global_;
  std::vector<Outgoing> outgoing_;
};

template <class Program>
RoundLedger run_congest(const WeightedGraph& g, std::vector<Program>& programs, const SimOptions& opt = {}) {
  Simulator sim(Model::congest, &g, g.num_nodes(), opt);
  return sim.run(programs);
}

template <class Program>
RoundLedger run_ncc(std::vector<Program>& programs, const SimOptions& opt = {}) {
  Simulator sim(Model::ncc, nullptr, static_cast<NodeId>(programs.size()), opt);
  return sim.run(programs);
}

template <class Program>
RoundLedger run_hybrid(const WeightedGraph& g, std::vector<Program>& programs, const SimOptions& opt = {}) {
  Simulator sim(Model::hybrid, &g, g.num_nodes(), opt);
  return sim.run(programs);
}

}  // namespace lapdist

#endif  // LAPDIST_NETSIM_HPP_
