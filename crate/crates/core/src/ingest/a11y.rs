use serde::{Deserialize, Serialize};

use crate::model::Rect;

/// Accessibility tree node. Nodes with an empty name are structural and
/// never returned by [`resolve_element`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct A11yNode {
    #[serde(default)]
    pub name: String,
    pub bbox: Rect,
    #[serde(default)]
    pub children: Vec<A11yNode>,
}

impl A11yNode {
    pub fn leaf(name: &str, bbox: Rect) -> Self {
        Self {
            name: name.to_string(),
            bbox,
            children: Vec::new(),
        }
    }

    fn walk<'a>(&'a self, depth: usize, visit: &mut impl FnMut(&'a A11yNode, usize)) {
        visit(self, depth);
        for c in &self.children {
            c.walk(depth + 1, visit);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementQuery {
    Point { x: i64, y: i64 },
    Bbox(Rect),
}

/// Finds the element an interaction landed on.
///
/// Point queries return the deepest named node containing the point; bbox
/// queries the named node with the highest IoU (depth breaks ties). Any
/// remaining tie goes to the smallest area, then to the first node in
/// pre-order.
pub fn resolve_element(tree: &A11yNode, query: ElementQuery) -> Option<(String, Rect)> {
    let mut best: Option<(&A11yNode, f64, usize)> = None;
    tree.walk(0, &mut |node, depth| {
        if node.name.trim().is_empty() || node.bbox.is_empty() {
            return;
        }
        let score = match query {
            ElementQuery::Point { x, y } => {
                if !node.bbox.contains_point(x, y) {
                    return;
                }
                0.0
            }
            ElementQuery::Bbox(r) => {
                let iou = node.bbox.iou(&r);
                if iou <= 0.0 {
                    return;
                }
                iou
            }
        };
        let better = match best {
            None => true,
            Some((b, b_score, b_depth)) => {
                (score, depth, std::cmp::Reverse(node.bbox.area()))
                    > (b_score, b_depth, std::cmp::Reverse(b.bbox.area()))
            }
        };
        if better {
            best = Some((node, score, depth));
        }
    });
    best.map(|(n, _, _)| (n.name.clone(), n.bbox))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree() -> A11yNode {
        A11yNode {
            name: String::new(),
            bbox: Rect::new(0, 0, 1080, 2400),
            children: vec![
                A11yNode {
                    name: "Toolbar".into(),
                    bbox: Rect::new(0, 0, 1080, 200),
                    children: vec![A11yNode::leaf("Search", Rect::new(100, 50, 600, 100))],
                },
                A11yNode::leaf("Order button", Rect::new(100, 2000, 880, 150)),
                // same depth as "Order button", overlapping and smaller
                A11yNode::leaf("Badge", Rect::new(150, 2050, 50, 50)),
            ],
        }
    }

    #[test]
    fn unique_leaf() {
        let r = resolve_element(&tree(), ElementQuery::Point { x: 500, y: 2100 });
        assert_eq!(r, Some(("Order button".to_string(), Rect::new(100, 2000, 880, 150))));
    }

    #[test]
    fn deepest_wins() {
        let r = resolve_element(&tree(), ElementQuery::Point { x: 200, y: 80 }).unwrap();
        assert_eq!(r.0, "Search");
        let r = resolve_element(&tree(), ElementQuery::Point { x: 900, y: 80 }).unwrap();
        assert_eq!(r.0, "Toolbar");
    }

    #[test]
    fn equal_depth_tie_goes_to_smallest() {
        let r = resolve_element(&tree(), ElementQuery::Point { x: 160, y: 2060 }).unwrap();
        assert_eq!(r.0, "Badge");
    }

    #[test]
    fn outside_everything() {
        assert_eq!(resolve_element(&tree(), ElementQuery::Point { x: 5000, y: 5 }), None);
        // inside only the unnamed root
        assert_eq!(resolve_element(&tree(), ElementQuery::Point { x: 10, y: 1000 }), None);
    }

    #[test]
    fn bbox_query_uses_iou() {
        let r = resolve_element(&tree(), ElementQuery::Bbox(Rect::new(110, 55, 590, 95))).unwrap();
        assert_eq!(r.0, "Search");
        assert_eq!(resolve_element(&tree(), ElementQuery::Bbox(Rect::new(3000, 3000, 5, 5))), None);
    }
}
