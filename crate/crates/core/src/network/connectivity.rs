use std::collections::VecDeque;

use super::Adjacency;

/// Tarjan's algorithm (iterative) over the nodes flagged in `active`.
/// Components are returned in reverse topological order.
fn tarjan(adj: &Adjacency, active: &[bool]) -> Vec<Vec<usize>> {
    const UNSEEN: usize = usize::MAX;
    let n = adj.len();
    // successors along information flow j -> i
    let succ: Vec<Vec<usize>> = (0..n)
        .map(|j| if active[j] { adj.out_neighbors(j).into_iter().filter(|&i| active[i]).collect() } else { Vec::new() })
        .collect();

    let mut index = vec![UNSEEN; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comps = Vec::new();
    let mut next = 0;

    for root in (0..n).filter(|&v| active[v]) {
        if index[root] != UNSEEN {
            continue;
        }
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            if let Some(&w) = succ[v].get(*pos) {
                *pos += 1;
                if index[w] == UNSEEN {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                let mut comp = Vec::new();
                loop {
                    let w = stack.pop().unwrap();
                    on_stack[w] = false;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                comp.sort_unstable();
                comps.push(comp);
            }
        }
    }
    comps
}

pub fn strongly_connected_components(adj: &Adjacency) -> Vec<Vec<usize>> {
    tarjan(adj, &vec![true; adj.len()])
}

pub fn is_strongly_connected(adj: &Adjacency) -> bool {
    is_strongly_connected_among(adj, &vec![true; adj.len()])
}

/// Strong connectivity of the subgraph induced by the active nodes.
pub fn is_strongly_connected_among(adj: &Adjacency, active: &[bool]) -> bool {
    if !active.iter().any(|&a| a) {
        return false;
    }
    tarjan(adj, active).len() == 1
}

/// Edmonds-Karp on a dense capacity matrix.
fn max_flow(cap: &mut [Vec<usize>], s: usize, t: usize) -> usize {
    let n = cap.len();
    let mut flow = 0;
    loop {
        let mut prev = vec![usize::MAX; n];
        prev[s] = s;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            if u == t {
                break;
            }
            for v in 0..n {
                if prev[v] == usize::MAX && cap[u][v] > 0 {
                    prev[v] = u;
                    queue.push_back(v);
                }
            }
        }
        if prev[t] == usize::MAX {
            return flow;
        }
        let mut bottleneck = usize::MAX;
        let mut v = t;
        while v != s {
            bottleneck = bottleneck.min(cap[prev[v]][v]);
            v = prev[v];
        }
        let mut v = t;
        while v != s {
            let u = prev[v];
            cap[u][v] -= bottleneck;
            cap[v][u] += bottleneck;
            v = u;
        }
        flow += bottleneck;
    }
}

fn link_capacities(adj: &Adjacency) -> Vec<Vec<usize>> {
    let n = adj.len();
    let mut cap = vec![vec![0; n]; n];
    for (i, j) in adj.links() {
        cap[j][i] = 1;
    }
    cap
}

/// Minimum number of links whose removal breaks strong connectivity.
/// Self-loops never count; a graph that is not strongly connected has
/// connectivity 0.
pub fn edge_connectivity(adj: &Adjacency) -> usize {
    let n = adj.len();
    if n < 2 || !is_strongly_connected(adj) {
        return 0;
    }
    let base = link_capacities(adj);
    // min over ordered pairs equals min over pairs through a fixed node
    (1..n)
        .map(|v| {
            let out = max_flow(&mut base.clone(), 0, v);
            let back = max_flow(&mut base.clone(), v, 0);
            out.min(back)
        })
        .min()
        .unwrap_or(0)
}

/// Minimum number of nodes whose removal breaks strong connectivity
/// (`n - 1` for a complete digraph), via node splitting.
pub fn node_connectivity(adj: &Adjacency) -> usize {
    let n = adj.len();
    if n < 2 || !is_strongly_connected(adj) {
        return 0;
    }
    let big = n;
    // node v -> (in = v, out = v + n)
    let mut base = vec![vec![0; 2 * n]; 2 * n];
    for v in 0..n {
        base[v][v + n] = 1;
    }
    for (i, j) in adj.links() {
        base[j + n][i] = big;
    }
    let mut best = n - 1;
    for s in 0..n {
        for t in 0..n {
            if s == t || adj.has(t, s) {
                continue;
            }
            let f = max_flow(&mut base.clone(), s + n, t);
            best = best.min(f);
        }
    }
    best
}
