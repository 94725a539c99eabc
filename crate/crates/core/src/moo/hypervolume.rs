use super::Objectives;

/// Exact 2-D hypervolume of the region dominated by `points`, with both
/// objectives divided by 100 and the reference point at the origin.
///
/// Points need not be mutually non-dominated; dominated ones add nothing.
pub fn hypervolume(points: &[Objectives]) -> f64 {
    let mut pts: Vec<(f64, f64)> = points
        .iter()
        .map(|o| o.normalized())
        .map(|(v, q)| (v.max(0.0), q.max(0.0)))
        .collect();
    pts.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.total_cmp(&a.1)));
    let mut area = 0.0;
    let mut best_qual = 0.0f64;
    for (vis, qual) in pts {
        if qual > best_qual {
            area += vis * (qual - best_qual);
            best_qual = qual;
        }
    }
    area
}
