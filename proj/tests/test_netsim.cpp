#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "lapdist/generators.hpp"
#include "lapdist/netsim.hpp"

using namespace lapdist;

namespace {

// Flood from node 0; every node forwards once, never back to its informant.
struct Flood {
  bool informed = false;
  int informed_round = -1;
  std::vector<DeliveredMessage> seen;

  void step(NodeContext& ctx) {
    for (const auto& env : ctx.inbox()) {
      seen.push_back({ctx.round(), env.edge == kNoEdge ? Channel::global : Channel::local, env.from, ctx.id(),
                      0});
    }
    const bool start = ctx.round() == 0 && ctx.id() == 0;
    if (!informed && (start || !ctx.inbox().empty())) {
      informed = true;
      informed_round = ctx.round();
      const EdgeId from = start ? kNoEdge : ctx.inbox().front().edge;
      for (const auto& inc : ctx.neighbors()) {
        if (inc.edge != from) ctx.send_local(inc.edge, Message{1});
      }
    }
    ctx.halt();
  }
};

// BFS tree from node 0: parent = first sender.
struct BfsTree {
  NodeId parent = kNoNode;
  int depth = -1;

  void step(NodeContext& ctx) {
    if (depth < 0) {
      if (ctx.round() == 0 && ctx.id() == 0) {
        depth = 0;
      } else if (!ctx.inbox().empty()) {
        const auto& first = ctx.inbox().front();
        parent = first.from;
        depth = static_cast<int>(first.msg[0]) + 1;
      }
      if (depth >= 0) {
        for (const auto& inc : ctx.neighbors()) {
          if (inc.other != parent) ctx.send_local(inc.edge, Message{depth});
        }
      }
    }
    ctx.halt();
  }
};

struct Idle {
  void step(NodeContext& ctx) { ctx.halt(); }
};

struct Spinner {
  void step(NodeContext&) {}
};

struct Oversize {
  void step(NodeContext& ctx) {
    if (ctx.id() == 0 && !ctx.neighbors().empty()) {
      Message m;
      for (int i = 0; i <= ctx.max_words(); ++i) m.push(i);
      ctx.send_local(ctx.neighbors().front().edge, m);
    }
    ctx.halt();
  }
};

struct DoubleSend {
  void step(NodeContext& ctx) {
    if (ctx.id() == 0 && ctx.round() == 0) {
      ctx.send_local(ctx.neighbors().front().edge, Message{1});
      ctx.send_local(ctx.neighbors().front().edge, Message{2});
    }
    ctx.halt();
  }
};

// Nodes 1..8 each send one global message to node 0 in round 0.
struct FanIn {
  int received = 0;
  void step(NodeContext& ctx) {
    received += static_cast<int>(ctx.inbox().size());
    if (ctx.round() == 0 && ctx.id() >= 1 && ctx.id() <= 8) ctx.send_global(0, Message{ctx.id()});
    ctx.halt();
  }
};

struct GlobalSpam {
  void step(NodeContext& ctx) {
    if (ctx.round() == 0 && ctx.id() == 0) {
      for (int i = 0; i <= ctx.global_cap(); ++i) ctx.send_global(1, Message{i});
    }
    ctx.halt();
  }
};

// Binary-heap convergecast of the sum of ids over global edges.
struct HeapSum {
  double acc = 0;
  int pending = 0;
  bool sent = false;

  void step(NodeContext& ctx) {
    const NodeId n = ctx.network_size();
    const NodeId u = ctx.id();
    if (ctx.round() == 0) {
      acc = u;
      pending = (2 * u + 1 < n) + (2 * u + 2 < n);
    }
    for (const auto& env : ctx.inbox()) {
      acc += env.msg.real(0);
      --pending;
    }
    if (pending == 0 && !sent && u != 0) {
      Message m;
      m.push_real(acc);
      ctx.send_global((u - 1) / 2, m);
      sent = true;
    }
    if (pending == 0) ctx.halt();
  }
};

// HYBRID: min-id election over a global heap, then the leader floods its id
// over local edges.
struct ElectAndFlood {
  NodeId best = kNoNode;
  int pending = 0;
  bool up_sent = false;
  bool down_done = false;
  NodeId leader = kNoNode;

  void step(NodeContext& ctx) {
    const NodeId n = ctx.network_size();
    const NodeId u = ctx.id();
    if (ctx.round() == 0) {
      best = u;
      pending = (2 * u + 1 < n) + (2 * u + 2 < n);
    }
    bool flood = false;
    for (const auto& env : ctx.inbox()) {
      if (env.edge == kNoEdge) {
        best = std::min<NodeId>(best, static_cast<NodeId>(env.msg[0]));
        --pending;
      } else if (leader == kNoNode) {
        leader = static_cast<NodeId>(env.msg[0]);
        flood = true;
      }
    }
    if (pending == 0 && !up_sent) {
      up_sent = true;
      if (u != 0) {
        ctx.send_global((u - 1) / 2, Message{best});
      } else {
        leader = best;
        flood = true;
      }
    }
    if (flood) {
      for (const auto& inc : ctx.neighbors()) ctx.send_local(inc.edge, Message{leader});
    }
    if (pending == 0 && leader != kNoNode) ctx.halt();
    if (pending == 0 && u != 0 && up_sent && leader == kNoNode) ctx.halt();
  }
};

}  // namespace

TEST(Congest, BroadcastOnPath) {
  const auto g = make_path(4).graph;
  std::vector<Flood> p(4);
  const auto ledger = run_congest(g, p);
  EXPECT_EQ(ledger.status, RunStatus::completed);
  EXPECT_EQ(ledger.rounds, 3);
  for (NodeId u = 0; u < 4; ++u) EXPECT_EQ(p[static_cast<std::size_t>(u)].informed_round, u);
}

TEST(Congest, AllHaltImmediately) {
  const auto g = make_cycle(5).graph;
  std::vector<Idle> p(5);
  const auto ledger = run_congest(g, p);
  EXPECT_EQ(ledger.rounds, 0);
  EXPECT_EQ(ledger.local_messages, 0);
}

TEST(Congest, BfsTreeOnC6) {
  const auto g = make_cycle(6).graph;
  std::vector<BfsTree> p(6);
  const auto ledger = run_congest(g, p);
  EXPECT_LE(ledger.rounds, 4);
  EXPECT_EQ(ledger.max_local_per_edge_direction, 1);
  for (const auto& [key, count] : ledger.local_edge_counts) EXPECT_EQ(count, 1);
  const std::vector<int> depth{0, 1, 2, 3, 2, 1};
  for (NodeId u = 0; u < 6; ++u) EXPECT_EQ(p[static_cast<std::size_t>(u)].depth, depth[static_cast<std::size_t>(u)]);
}

TEST(Congest, MaxRoundsReportedDistinctly) {
  const auto g = make_path(3).graph;
  std::vector<Spinner> p(3);
  SimOptions opt;
  opt.max_rounds = 7;
  const auto ledger = run_congest(g, p, opt);
  EXPECT_EQ(ledger.status, RunStatus::max_rounds_exceeded);
  EXPECT_EQ(ledger.rounds, 7);
}

TEST(Congest, PayloadAndDuplicateErrors) {
  const auto g = make_path(3).graph;
  std::vector<Oversize> a(3);
  try {
    run_congest(g, a);
    FAIL();
  } catch (const netsim_error& e) {
    EXPECT_EQ(e.kind(), netsim_error::Kind::payload_overflow);
  }
  std::vector<DoubleSend> b(3);
  try {
    run_congest(g, b);
    FAIL();
  } catch (const netsim_error& e) {
    EXPECT_EQ(e.kind(), netsim_error::Kind::duplicate_edge_send);
  }
}

TEST(Congest, MessageBitsFollowNBar) {
  const auto g = make_path(16).graph;
  std::vector<Flood> p(16);
  const auto ledger = run_congest(g, p);
  EXPECT_EQ(ledger.word_bits, 4);
  EXPECT_EQ(ledger.message_bits, 16);
  for (const auto& m : ledger.delivered) EXPECT_EQ(m.bits, 4);
}

TEST(Congest, DeterminismAndReplay) {
  const auto g = make_random_connected(40, 2.0, 3).graph;
  std::vector<Flood> p1(40), p2(40);
  const auto l1 = run_congest(g, p1, {});
  const auto l2 = run_congest(g, p2, {});
  EXPECT_EQ(l1.rounds, l2.rounds);
  EXPECT_EQ(l1.replay(), l2.replay());
  // Replay reconstructs exactly what the programs observed.
  std::vector<DeliveredMessage> observed;
  for (const auto& prog : p1) observed.insert(observed.end(), prog.seen.begin(), prog.seen.end());
  auto replayed = l1.replay();
  for (auto& m : replayed) m.bits = 0;
  std::sort(observed.begin(), observed.end());
  EXPECT_EQ(observed, replayed);
  std::ostringstream csv;
  l1.write_csv(csv);
  const std::string text = csv.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), static_cast<long>(l1.delivered.size()) + 1);
}

TEST(Ncc, CapArithmetic) {
  std::vector<Idle> p(16);
  const auto ledger = run_ncc(p);
  EXPECT_EQ(ledger.global_cap, 4);
}

TEST(Ncc, FanInDropsExcess) {
  for (auto policy : {DropPolicy::seeded_random, DropPolicy::lowest_sender_first}) {
    std::vector<FanIn> p(16);
    SimOptions opt;
    opt.drop_policy = policy;
    const auto ledger = run_ncc(p, opt);
    EXPECT_EQ(p[0].received, 4);
    EXPECT_EQ(ledger.dropped.size(), 4u);
    EXPECT_EQ(ledger.global_messages, 4);
    EXPECT_EQ(ledger.max_global_received_per_node, 4);
    if (policy == DropPolicy::lowest_sender_first) {
      for (const auto& d : ledger.dropped) EXPECT_GE(d.src, 5);
    }
  }
}

TEST(Ncc, SendCapIsAnError) {
  std::vector<GlobalSpam> p(16);
  try {
    run_ncc(p);
    FAIL();
  } catch (const netsim_error& e) {
    EXPECT_EQ(e.kind(), netsim_error::Kind::send_cap);
  }
}

TEST(Ncc, HeapSumOver16) {
  std::vector<HeapSum> p(16);
  const auto ledger = run_ncc(p);
  EXPECT_EQ(ledger.status, RunStatus::completed);
  EXPECT_DOUBLE_EQ(p[0].acc, 120.0);
  EXPECT_LE(ledger.max_global_received_per_node, 4);
  EXPECT_TRUE(ledger.dropped.empty());
  EXPECT_EQ(ledger.rounds, 4);
}

TEST(Hybrid, ChannelSeparation) {
  const auto g = make_cycle(8).graph;
  std::vector<Flood> local_only(8);
  const auto l1 = run_hybrid(g, local_only);
  EXPECT_EQ(l1.global_messages, 0);
  EXPECT_GT(l1.local_messages, 0);
  std::vector<HeapSum> global_only(8);
  const auto l2 = run_hybrid(g, global_only);
  EXPECT_EQ(l2.local_messages, 0);
  EXPECT_GT(l2.global_messages, 0);
}

TEST(Hybrid, ElectThenFloodOnC8) {
  const auto g = make_cycle(8).graph;
  std::vector<ElectAndFlood> p(8);
  const auto ledger = run_hybrid(g, p);
  EXPECT_EQ(ledger.status, RunStatus::completed);
  for (const auto& prog : p) EXPECT_EQ(prog.leader, 0);
  // D = 4, heap depth 3.
  EXPECT_LE(ledger.rounds, 4 + 2 * ceil_log2(8));
}

TEST(Netsim, WrongChannelRejected) {
  const auto g = make_path(3).graph;
  std::vector<FanIn> p(3);
  EXPECT_THROW(run_congest(g, p), netsim_error);
}
