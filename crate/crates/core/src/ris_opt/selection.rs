use serde::{Deserialize, Serialize};

use crate::scene::Vec3;

/// For every user, the RIS ids used to localize it, nearest first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub per_user: Vec<Vec<usize>>,
}

impl SelectionResult {
    /// Every user uses every RIS.
    pub fn all(users: usize, ris_count: usize) -> Self {
        Self { per_user: vec![(0..ris_count).collect(); users] }
    }

    /// Users that selected RIS `m`, in increasing user order.
    pub fn users_of(&self, m: usize) -> Vec<usize> {
        self.per_user
            .iter()
            .enumerate()
            .filter(|(_, s)| s.contains(&m))
            .map(|(k, _)| k)
            .collect()
    }
}

/// Picks the `l_sel` RISs closest to each estimated user location; equal
/// distances go to the lower id.
pub fn select_ris(estimates: &[Vec3], ris_positions: &[Vec3], l_sel: usize) -> SelectionResult {
    let take = l_sel.min(ris_positions.len());
    let per_user = estimates
        .iter()
        .map(|p| {
            let mut ids: Vec<usize> = (0..ris_positions.len()).collect();
            ids.sort_by(|&a, &b| {
                let da = (ris_positions[a] - p).norm();
                let db = (ris_positions[b] - p).norm();
                da.total_cmp(&db).then(a.cmp(&b))
            });
            ids.truncate(take);
            ids
        })
        .collect();
    SelectionResult { per_user }
}
