//! Genealogy records: birth and end epochs only, no paths.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Fate {
    Alive,
    Branched,
    Killed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub parent: Option<usize>,
    pub birth_time: f64,
    pub birth_position: f64,
    /// End epoch; `NaN` while alive.
    pub end_time: f64,
    pub fate: Fate,
    /// Ulam–Harris digit for children, root index for roots.
    pub tag: u32,
}

/// Records indexed by particle id. A parent's id is always smaller than its
/// children's, which makes MRCA queries a two-pointer walk.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct GenealogyForest {
    pub records: Vec<Record>,
}

/// Most recent common ancestor of two lineages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mrca {
    pub ancestor: usize,
    pub split_time: f64,
    pub split_position: f64,
}

impl GenealogyForest {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn record(&self, id: usize) -> Result<&Record> {
        self.records.get(id).ok_or(Error::UnknownParticle(id))
    }

    pub fn push(&mut self, record: Record) -> usize {
        self.records.push(record);
        self.records.len() - 1
    }

    pub fn close(&mut self, id: usize, time: f64, fate: Fate) {
        let r = &mut self.records[id];
        r.end_time = time;
        r.fate = fate;
    }

    pub fn roots(&self) -> impl Iterator<Item = usize> + '_ {
        self.records.iter().enumerate().filter(|(_, r)| r.parent.is_none()).map(|(i, _)| i)
    }

    /// Ulam–Harris label `r<root>:<digits>`, e.g. `r0:0110`.
    pub fn label(&self, id: usize) -> Result<String> {
        let mut digits = Vec::new();
        let mut cur = id;
        loop {
            let r = self.record(cur)?;
            match r.parent {
                Some(p) => {
                    digits.push(if r.tag == 0 { '0' } else { '1' });
                    cur = p;
                }
                None => {
                    digits.reverse();
                    return Ok(format!("r{}:{}", r.tag, digits.into_iter().collect::<String>()));
                }
            }
        }
    }

    /// MRCA of `a` and `b`, or `None` if they descend from different roots.
    pub fn mrca(&self, a: usize, b: usize) -> Result<Option<Mrca>> {
        self.record(a)?;
        self.record(b)?;
        if a == b {
            let r = &self.records[a];
            return Ok(Some(Mrca {
                ancestor: a,
                split_time: r.end_time,
                split_position: f64::NAN,
            }));
        }
        let (mut x, mut y) = (a, b);
        let mut child = a;
        while x != y {
            if x > y {
                child = x;
                match self.records[x].parent {
                    Some(p) => x = p,
                    None => return Ok(None),
                }
            } else {
                child = y;
                match self.records[y].parent {
                    Some(p) => y = p,
                    None => return Ok(None),
                }
            }
        }
        let c = &self.records[child];
        Ok(Some(Mrca {
            ancestor: x,
            split_time: c.birth_time,
            split_position: c.birth_position,
        }))
    }

    /// `d(v, v′) = t − |v ∧ v′|`; lineages from different roots are at
    /// distance `t`.
    pub fn distance_matrix(&self, ids: &[usize], t: f64) -> Result<Vec<Vec<f64>>> {
        for &id in ids {
            let r = self.record(id)?;
            if r.fate != Fate::Alive || r.birth_time > t {
                return Err(Error::NotAlive { id, time: t });
            }
        }
        let k = ids.len();
        let mut d = vec![vec![0.0; k]; k];
        for i in 0..k {
            for j in (i + 1)..k {
                let v = match self.mrca(ids[i], ids[j])? {
                    Some(m) if ids[i] != ids[j] => t - m.split_time,
                    Some(_) => 0.0,
                    None => t,
                };
                d[i][j] = v;
                d[j][i] = v;
            }
        }
        Ok(d)
    }

    /// Drops every record that is not an ancestor of `keep` (inclusive).
    /// Returns the new ids of `keep`, in order.
    pub fn prune(&mut self, keep: &[usize]) -> Vec<usize> {
        let n = self.records.len();
        let mut marked = vec![false; n];
        for &id in keep {
            let mut cur = Some(id);
            while let Some(c) = cur {
                if marked[c] {
                    break;
                }
                marked[c] = true;
                cur = self.records[c].parent;
            }
        }
        let mut remap = vec![usize::MAX; n];
        let mut kept = Vec::with_capacity(keep.len() * 2);
        for (old, rec) in self.records.iter().enumerate() {
            if marked[old] {
                remap[old] = kept.len();
                let mut r = *rec;
                r.parent = r.parent.map(|p| remap[p]);
                kept.push(r);
            }
        }
        self.records = kept;
        keep.iter().map(|&id| remap[id]).collect()
    }
}

/// True when `d(i,l) ≤ max(d(i,j), d(j,l))` for all triples, up to `tol`.
pub fn is_ultrametric(d: &[Vec<f64>], tol: f64) -> bool {
    let k = d.len();
    for i in 0..k {
        if d[i][i].abs() > tol {
            return false;
        }
        for j in 0..k {
            if (d[i][j] - d[j][i]).abs() > tol || d[i][j] < -tol {
                return false;
            }
            for l in 0..k {
                if d[i][l] > d[i][j].max(d[j][l]) + tol {
                    return false;
                }
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(parent: Option<usize>, birth: f64, tag: u32) -> Record {
        Record {
            parent,
            birth_time: birth,
            birth_position: birth * 0.1,
            end_time: f64::NAN,
            fate: Fate::Alive,
            tag,
        }
    }

    fn small() -> GenealogyForest {
        // 0 splits at 1 into 1,2; 2 splits at 3 into 3,4.
        let mut f = GenealogyForest::default();
        f.push(rec(None, 0.0, 0));
        f.push(rec(Some(0), 1.0, 1));
        f.push(rec(Some(0), 1.0, 0));
        f.push(rec(Some(2), 3.0, 0));
        f.push(rec(Some(2), 3.0, 1));
        f.close(0, 1.0, Fate::Branched);
        f.close(2, 3.0, Fate::Branched);
        f
    }

    #[test]
    fn siblings_and_cousins() {
        let f = small();
        let d = f.distance_matrix(&[3, 4, 1], 5.0).unwrap();
        assert_eq!(d[0][1], 2.0);
        assert_eq!(d[0][2], 4.0);
        assert_eq!(d[1][2], 4.0);
        assert!(is_ultrametric(&d, 0.0));
        assert_eq!(f.distance_matrix(&[1], 5.0).unwrap(), vec![vec![0.0]]);
        assert!(matches!(f.distance_matrix(&[0, 1], 5.0), Err(Error::NotAlive { .. })));
        assert!(matches!(f.distance_matrix(&[9], 5.0), Err(Error::UnknownParticle(9))));
        assert_eq!(f.mrca(3, 1).unwrap().unwrap().split_position, 0.1);
    }

    #[test]
    fn labels_follow_ulam_harris() {
        let f = small();
        assert_eq!(f.label(0).unwrap(), "r0:");
        assert_eq!(f.label(4).unwrap(), "r0:01");
        assert_eq!(f.label(1).unwrap(), "r0:1");
    }

    #[test]
    fn pruning_keeps_distances() {
        let mut f = small();
        let before = f.distance_matrix(&[3, 4], 5.0).unwrap();
        let ids = f.prune(&[3, 4]);
        assert_eq!(f.len(), 4);
        assert_eq!(f.distance_matrix(&ids, 5.0).unwrap(), before);
        assert_eq!(f.label(ids[1]).unwrap(), "r0:01");
    }

    #[test]
    fn ultrametric_detector_rejects_violations() {
        let d = vec![vec![0.0, 1.0, 3.0], vec![1.0, 0.0, 1.0], vec![3.0, 1.0, 0.0]];
        assert!(!is_ultrametric(&d, 1e-12));
    }
}
