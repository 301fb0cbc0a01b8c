use proptest::prelude::*;
use rfxy::lattice::{
    boundary, closed_hull, decompose_complement, interior, site_components, thicken, Ambient, BlockGrid, LatticeGeom,
    Region, Side, Site,
};

fn region_strategy() -> impl Strategy<Value = Region> {
    prop::collection::vec((-12i64..12, -12i64..12), 1..60).prop_map(|v| v.into_iter().collect())
}

fn linf(a: Site, b: Site) -> i64 {
    (a.0 - b.0).abs().max((a.1 - b.1).abs())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn set_algebra_is_consistent(a in region_strategy(), b in region_strategy()) {
        let u = a.union(&b);
        let i = a.intersection(&b);
        prop_assert_eq!(u.len() + i.len(), a.len() + b.len());
        prop_assert!(i.is_subset(&a) && a.is_subset(&u));
        prop_assert!(a.difference(&b).is_disjoint(&b));
        prop_assert_eq!(a.difference(&b).union(&i), a.clone());
    }

    #[test]
    fn bbox_tracks_removals(a in region_strategy()) {
        let mut r = a.clone();
        let sites: Vec<Site> = a.iter().collect();
        for s in &sites[..sites.len() / 2] {
            r.remove(*s);
            let naive = r.iter().fold(None, |acc: Option<(Site, Site)>, (x, y)| match acc {
                None => Some(((x, y), (x, y))),
                Some((lo, hi)) => Some(((lo.0.min(x), lo.1.min(y)), (hi.0.max(x), hi.1.max(y)))),
            });
            prop_assert_eq!(r.bbox(), naive);
        }
    }

    #[test]
    fn boundaries_sit_on_either_side(a in region_strategy()) {
        let inner = boundary(&a, Side::Inner);
        let outer = boundary(&a, Side::Outer);
        prop_assert!(inner.is_subset(&a));
        prop_assert!(outer.is_disjoint(&a));
        for s in outer.iter() {
            prop_assert!([(1, 0), (-1, 0), (0, 1), (0, -1)].iter().any(|(dx, dy)| inner.contains((s.0 + dx, s.1 + dy))));
        }
    }

    #[test]
    fn thickening_matches_block_distance(a in region_strategy(), l0 in prop::sample::select(vec![2i64, 4]), radius in 1i64..6) {
        let t = thicken(&a, l0, radius).unwrap();
        prop_assert!(a.is_subset(&t));
        let grid = BlockGrid::new(l0).unwrap();
        prop_assert!(grid.is_measurable(&t));
        // A block is kept iff some site in it lies within radius − 1 of the region.
        let ((x0, y0), (x1, y1)) = a.bbox().unwrap();
        let pad = radius + 2 * l0;
        for i in (x0 - pad).div_euclid(l0)..=(x1 + pad).div_euclid(l0) {
            for j in (y0 - pad).div_euclid(l0)..=(y1 + pad).div_euclid(l0) {
                let block = grid.block((i, j));
                let near = block.iter().any(|s| a.iter().any(|r| linf(s, r) < radius));
                prop_assert_eq!(block.is_subset(&t), near);
            }
        }
    }

    #[test]
    fn complement_components_partition_the_frame(a in region_strategy()) {
        let c = decompose_complement(&a, Ambient::Infinite);
        let ((x0, y0), (x1, y1)) = a.bbox().unwrap();
        let frame = Region::rect(x0 - 1, y0 - 1, x1 - x0 + 3, y1 - y0 + 3);
        let mut all = a.union(&c.exterior);
        for i in &c.interiors {
            prop_assert!(i.is_disjoint(&all));
            all.extend_from(i);
        }
        prop_assert_eq!(all, frame);
        let int = interior(&a);
        prop_assert!(int.is_disjoint(&a));
        prop_assert!(boundary(&int, Side::Outer).is_subset(&a));
    }

    #[test]
    fn closed_hull_grows(a in region_strategy()) {
        let h = closed_hull(&a, 4).unwrap();
        prop_assert!(a.is_subset(&h));
        prop_assert!(interior(&a).is_subset(&h));
        prop_assert!(h.is_subset(&closed_hull(&h, 4).unwrap()));
    }

    #[test]
    fn site_components_are_maximal(a in region_strategy()) {
        let comps = site_components(&a);
        let total: usize = comps.iter().map(Region::len).sum();
        prop_assert_eq!(total, a.len());
        for (i, c) in comps.iter().enumerate() {
            for d in &comps[i + 1..] {
                for s in c.iter() {
                    prop_assert!(d.iter().all(|t| linf(s, t) > 1));
                }
            }
        }
    }
}

#[test]
fn ring_has_one_interior_component() {
    let ring = Region::rect(0, 0, 7, 7).difference(&Region::rect(2, 2, 3, 3));
    let c = decompose_complement(&ring, Ambient::Infinite);
    assert_eq!(c.interiors.len(), 1);
    assert_eq!(c.interiors[0], Region::rect(2, 2, 3, 3));
}

#[test]
fn finite_ambient_merges_edge_components() {
    let geom = LatticeGeom::new(8).unwrap();
    let wall = Region::rect(3, 0, 1, 8);
    let c = decompose_complement(&wall, Ambient::Finite(geom));
    assert!(c.interiors.is_empty());
    assert_eq!(c.exterior.len(), 56);
}

#[test]
fn diagonal_sites_enclose_a_cell() {
    let diamond: Region = [(1, 0), (0, 1), (2, 1), (1, 2)].into_iter().collect();
    assert_eq!(interior(&diamond), [(1, 1)].into_iter().collect());
}
