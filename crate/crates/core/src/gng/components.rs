use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Components {
    pub labels: Vec<usize>,
    pub count: usize,
}

/// Labels `0..count` assigned in order of each component's lowest-index node.
pub fn connected_components<I>(node_count: usize, edges: I) -> Components
where
    I: IntoIterator<Item = (usize, usize)>,
{
    let mut adjacency = vec![Vec::new(); node_count];
    for (a, b) in edges {
        adjacency[a].push(b);
        adjacency[b].push(a);
    }
    let mut labels = vec![usize::MAX; node_count];
    let mut count = 0;
    let mut stack = Vec::new();
    for start in 0..node_count {
        if labels[start] != usize::MAX {
            continue;
        }
        labels[start] = count;
        stack.push(start);
        while let Some(n) = stack.pop() {
            for &m in &adjacency[n] {
                if labels[m] == usize::MAX {
                    labels[m] = count;
                    stack.push(m);
                }
            }
        }
        count += 1;
    }
    Components { labels, count }
}
