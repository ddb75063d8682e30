use crate::model::{ActionKind, ActionRecord};

fn one_line(s: &str) -> String {
    s.split(['\n', '\r']).map(str::trim).filter(|p| !p.is_empty()).collect::<Vec<_>>().join(" ")
}

fn element_label(a: &ActionRecord) -> Option<String> {
    match (&a.element_name, &a.element_bbox) {
        (Some(name), _) if !name.trim().is_empty() => Some(one_line(name)),
        (_, Some(b)) => Some(format!("element at {},{} {}x{}", b.x, b.y, b.width, b.height)),
        _ => None,
    }
}

/// Renders an action as a single prompt line, e.g. `[Adirondack] click`.
pub fn format_action_string(a: &ActionRecord) -> String {
    let element = element_label(a);
    match (&a.kind, element) {
        (ActionKind::TypeText, element) => {
            let typed = one_line(a.typed_text.as_deref().unwrap_or(""));
            match element {
                Some(e) => format!("type '{typed}' into [{e}]"),
                None => format!("type '{typed}'"),
            }
        }
        (kind, Some(e)) => format!("[{e}] {}", one_line(kind.as_str())),
        (kind, None) => one_line(kind.as_str()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Rect;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(format_action_string(&ActionRecord::click("Adirondack")), "[Adirondack] click");
        let hover = ActionRecord {
            element_name: Some("Menu".into()),
            ..ActionRecord::new(ActionKind::Hover)
        };
        assert_eq!(format_action_string(&hover), "[Menu] hover");
        assert_eq!(format_action_string(&ActionRecord::new(ActionKind::Scroll)), "scroll");
        assert_eq!(
            format_action_string(&ActionRecord::type_text("Search", "pizza")),
            "type 'pizza' into [Search]"
        );
        let bbox_only = ActionRecord::new(ActionKind::Click).with_bbox(Rect::new(1, 2, 3, 4));
        assert_eq!(format_action_string(&bbox_only), "[element at 1,2 3x4] click");
        let other = ActionRecord {
            element_name: Some("Size".into()),
            ..ActionRecord::new(ActionKind::Other("select".into()))
        };
        assert_eq!(format_action_string(&other), "[Size] select");
    }

    proptest! {
        #[test]
        fn never_contains_newlines(name in ".*", typed in ".*", kind in "[a-z_\n]{1,8}") {
            let a = ActionRecord {
                kind: ActionKind::from(kind),
                element_name: Some(name),
                element_bbox: None,
                typed_text: Some(typed),
            };
            let s = format_action_string(&a);
            prop_assert!(!s.contains('\n') && !s.contains('\r'));
        }
    }
}
