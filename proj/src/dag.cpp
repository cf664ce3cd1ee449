#include "spms/dag.hpp"

#include <algorithm>

namespace spms {

u64 dag_work(const Dag& d) {
  u64 w = 0;
  for (const Node& n : d.nodes) w += n.weight;
  return w;
}

u64 dag_span(const Dag& d) {
  if (d.nodes.empty()) return 0;
  const u32 n = static_cast<u32>(d.nodes.size());
  // All edges point forward, so one pass propagating longest arriving path.
  std::vector<u64> arrive(n, 0);
  u64 final_dist = 0;
  for (u32 i = 0; i < n; ++i) {
    const Node& nd = d.nodes[i];
    const u64 dist = arrive[i] + nd.weight;
    auto push = [&](u32 s) {
      SPMS_CHECK(s > i && s < n, "dag edge not forward");
      arrive[s] = std::max(arrive[s], dist);
    };
    if (nd.kind == NodeKind::Fork) {
      push(i + 1);
      push(nd.aux);
    } else if (nd.next != kNoNode) {
      push(nd.next);
    } else {
      final_dist = std::max(final_dist, dist);
    }
  }
  return final_dist;
}

void dag_validate(const Dag& d) {
  const u32 n = static_cast<u32>(d.nodes.size());
  SPMS_CHECK(n > 0, "empty dag");
  std::vector<u8> indeg(n, 0);
  u32 sinks = 0;
  for (u32 i = 0; i < n; ++i) {
    const Node& nd = d.nodes[i];
    SPMS_CHECK(nd.weight >= 1, "zero-weight node");
    SPMS_CHECK(nd.ev <= d.events.size() && d.ev_end(i) >= nd.ev, "event range corrupt");
    auto fwd = [&](u32 s) { SPMS_CHECK(s > i && s < n, "edge not forward"); ++indeg[s]; };
    switch (nd.kind) {
      case NodeKind::Fork: {
        SPMS_CHECK(nd.aux != kNoNode && nd.pair != kNoNode, "fork missing links");
        fwd(i + 1);
        fwd(nd.aux);
        SPMS_CHECK(d.nodes[nd.pair].kind == NodeKind::Join && d.nodes[nd.pair].pair == i,
                   "fork/join pair mismatch");
        SPMS_CHECK(d.nodes[nd.aux].right_child == 1 && d.nodes[nd.aux].parent_fork == i,
                   "right-subtask entry not linked to fork");
        break;
      }
      case NodeKind::ScopePush:
        SPMS_CHECK(nd.pair != kNoNode && d.nodes[nd.pair].kind == NodeKind::ScopePop &&
                       d.nodes[nd.pair].pair == i,
                   "scope pair mismatch");
        [[fallthrough]];
      case NodeKind::Leaf:
      case NodeKind::Join:
      case NodeKind::ScopePop:
        if (nd.next != kNoNode) fwd(nd.next); else ++sinks;
        break;
    }
  }
  SPMS_CHECK(sinks == 1, "dag must have exactly one sink");
  SPMS_CHECK(indeg[0] == 0, "root has a predecessor");
  for (u32 i = 1; i < n; ++i) {
    const u8 want = d.nodes[i].kind == NodeKind::Join ? 2 : 1;
    SPMS_CHECK(indeg[i] == want, "in-degree mismatch at node " + std::to_string(i));
  }
  // Segment LIFO: forks/scopes nest properly in serial order.
  std::vector<u32> stack;
  for (u32 i = 0; i < n; ++i) {
    const Node& nd = d.nodes[i];
    if (nd.kind == NodeKind::Fork || nd.kind == NodeKind::ScopePush) stack.push_back(i);
    if (nd.kind == NodeKind::Join || nd.kind == NodeKind::ScopePop) {
      SPMS_CHECK(!stack.empty() && stack.back() == nd.pair, "segment LIFO violated");
      stack.pop_back();
    }
  }
  SPMS_CHECK(stack.empty(), "unclosed fork or scope");
}

std::vector<Kernel> partition_kernels(const Dag& d, const std::vector<StealRec>& steals) {
  const u32 n = static_cast<u32>(d.nodes.size());
  // Process steals in the order they happened: each one splits the kernel it
  // was taken from, exactly mirroring the execution history.
  // Ties (two thieves served in one tick) follow the deque discipline: the
  // older entry — the lower fork index — went first.
  std::vector<StealRec> ss = steals;
  std::sort(ss.begin(), ss.end(), [](const StealRec& a, const StealRec& b) {
    return a.time != b.time ? a.time < b.time : a.fork < b.fork;
  });
  std::vector<Kernel> ks{{0, n}};
  for (const StealRec& s : ss) {
    SPMS_CHECK(s.entry < n && s.join < n && s.fork < n, "steal node out of range");
    auto it = std::upper_bound(ks.begin(), ks.end(), s.entry,
                               [](u32 v, const Kernel& k) { return v < k.end; });
    SPMS_CHECK(it != ks.end() && it->begin <= s.entry, "steal entry not in any kernel");
    const Kernel k = *it;
    SPMS_CHECK(k.begin <= s.fork && s.fork < s.entry,
               "steal's fork outside its containing kernel");
    SPMS_CHECK(s.entry < s.join && s.join < k.end,
               "steal's join outside its containing kernel");
    const auto idx = static_cast<std::size_t>(it - ks.begin());
    ks[idx] = Kernel{k.begin, s.entry};
    ks.insert(ks.begin() + static_cast<std::ptrdiff_t>(idx) + 1,
              {Kernel{s.entry, s.join}, Kernel{s.join, k.end}});
  }
  for (const Kernel& k : ks) SPMS_CHECK(k.begin < k.end, "empty kernel");
  SPMS_CHECK(ks.size() == 2 * steals.size() + 1, "kernel count mismatch");
  return ks;
}

std::vector<u32> steal_path(const Dag& d, const std::vector<StealRec>& steals,
                            u32 entry, u32 end_join) {
  std::vector<u32> entries;
  entries.reserve(steals.size());
  for (const StealRec& s : steals) entries.push_back(s.entry);
  std::sort(entries.begin(), entries.end());

  std::vector<u32> path;
  u32 cur = entry;
  for (;;) {
    path.push_back(cur);
    const Node& nd = d.nodes[cur];
    if (nd.kind == NodeKind::Fork) {
      // Left past a stolen fork (the stolen right child is off-path), right
      // otherwise: an unstolen right child means its fork's deque entry was
      // popped locally, and the oldest-first steal discipline then rules out
      // steals anywhere in the left subtree.
      const bool rc_stolen = std::binary_search(entries.begin(), entries.end(), nd.aux);
      cur = rc_stolen ? cur + 1 : nd.aux;
    } else {
      if (nd.next == end_join || (nd.next == kNoNode && end_join == kNoNode)) break;
      SPMS_CHECK(nd.next != kNoNode, "steal path walked past the computation's sink");
      cur = nd.next;
    }
  }

  std::vector<u8> on_path(d.nodes.size(), 0);
  for (u32 v : path) on_path[v] = 1;
  for (const StealRec& s : steals) {
    SPMS_CHECK(on_path[s.fork], "stolen subtask's fork not on the steal path");
  }
  for (u32 v : path) {
    const Node& nd = d.nodes[v];
    if (nd.kind == NodeKind::Fork && !on_path[nd.aux]) {
      SPMS_CHECK(std::binary_search(entries.begin(), entries.end(), nd.aux),
                 "off-path right child of an on-path fork was not stolen");
    }
  }
  return path;
}

}  // namespace spms
