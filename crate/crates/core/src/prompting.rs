//! Prompt rendering: items and purchase histories to generation-ready text.
//!
//! The default template is pinned byte-for-byte, including the U+2019
//! apostrophe in the user prefix and the dangling next-item prefix that
//! ends every history prompt.

use serde::{Deserialize, Serialize};

use crate::corpus::Item;
use crate::error::{Error, Result};

/// The fixed strings wrapped around rendered items.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub user_prefix: String,
    pub first_item_prefix: String,
    pub next_item_prefix: String,
    /// Attribute clause names, in render order.
    pub attribute_names: [String; 4],
    /// Stand-in for absent attributes.
    pub wildcard: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate {
            user_prefix: "This is the summary of a user\u{2019}s purchase history.".to_string(),
            first_item_prefix: " The first item bought is as follows. ".to_string(),
            next_item_prefix: "\nThe next item bought is as follows.".to_string(),
            attribute_names: [
                "Title".to_string(),
                "Category".to_string(),
                "Brand".to_string(),
                "Price".to_string(),
            ],
            wildcard: "Unknown".to_string(),
        }
    }
}

impl PromptTemplate {
    /// "Title: {t}. Category: {c}. Brand: {b}. Price: {p}." with the
    /// wildcard for absent attributes. No trailing whitespace.
    pub fn render_item(&self, item: &Item) -> String {
        let values = [&item.title, &item.category, &item.brand, &item.price];
        let clauses: Vec<String> = self
            .attribute_names
            .iter()
            .zip(values)
            .map(|(name, value)| {
                format!("{name}: {}.", value.as_deref().unwrap_or(&self.wildcard))
            })
            .collect();
        clauses.join(" ")
    }

    /// Full history prompt: user prefix, first item, each later item behind
    /// a next-item prefix, then a dangling next-item prefix and newline
    /// inviting the completion.
    pub fn render_history_prompt(&self, history: &[Item]) -> Result<String> {
        let (first, rest) = history
            .split_first()
            .ok_or(Error::EmptyInput("history must contain at least one item"))?;
        let mut prompt = String::with_capacity(128 * (history.len() + 1));
        prompt.push_str(&self.user_prefix);
        prompt.push_str(&self.first_item_prefix);
        prompt.push_str(&self.render_item(first));
        for item in rest {
            prompt.push_str(&self.next_item_prefix);
            prompt.push(' ');
            prompt.push_str(&self.render_item(item));
        }
        prompt.push_str(&self.next_item_prefix);
        prompt.push('\n');
        Ok(prompt)
    }

    /// History prompt with the rendered target appended. Also returns the
    /// byte offset where the target begins, for loss masking.
    pub fn render_training_example(&self, history: &[Item], target: &Item) -> Result<(String, usize)> {
        let mut text = self.render_history_prompt(history)?;
        let offset = text.len();
        text.push_str(&self.render_item(target));
        Ok((text, offset))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn template() -> PromptTemplate {
        PromptTemplate::default()
    }

    fn hillman() -> Item {
        Item {
            title: Some("The Hillman Group 591520 Small Wire Nail and Brad Assortment, 260-Pack".into()),
            category: Some("Tools & Home Improvement".into()),
            brand: Some("Hillman".into()),
            price: None,
            ..Item::bare("hillman")
        }
    }

    fn pro_flex() -> Item {
        Item {
            title: Some("Pro Flex Super Flexible Elastomeric Sealant Acrylic Clear Paintable 10 Oz".into()),
            category: Some("Tools & Home Improvement".into()),
            brand: Some("Geocel".into()),
            price: Some("$11.22".into()),
            ..Item::bare("proflex")
        }
    }

    fn trimaco() -> Item {
        Item {
            title: Some("Trimaco Llc RF36 35-Inch by 166-Feet Rosin Flooring Paper, Red".into()),
            category: Some("Tools & Home Improvement".into()),
            brand: Some("Trimaco".into()),
            price: None,
            ..Item::bare("trimaco")
        }
    }

    #[test]
    fn render_item_full_attributes() {
        assert_eq!(
            template().render_item(&pro_flex()),
            "Title: Pro Flex Super Flexible Elastomeric Sealant Acrylic Clear Paintable 10 Oz. \
             Category: Tools & Home Improvement. Brand: Geocel. Price: $11.22."
        );
    }

    #[test]
    fn render_item_all_absent() {
        assert_eq!(
            template().render_item(&Item::bare("x")),
            "Title: Unknown. Category: Unknown. Brand: Unknown. Price: Unknown."
        );
    }

    #[test]
    fn render_item_missing_price_only() {
        let text = template().render_item(&hillman());
        assert!(text.ends_with("Price: Unknown."));
        assert!(!text.ends_with(' '));
    }

    #[test]
    fn history_prompt_matches_pinned_bytes() {
        let prompt = template()
            .render_history_prompt(&[hillman(), pro_flex()])
            .unwrap();
        let expected = "This is the summary of a user\u{2019}s purchase history. \
                        The first item bought is as follows. \
                        Title: The Hillman Group 591520 Small Wire Nail and Brad Assortment, 260-Pack. \
                        Category: Tools & Home Improvement. Brand: Hillman. Price: Unknown.\n\
                        The next item bought is as follows. \
                        Title: Pro Flex Super Flexible Elastomeric Sealant Acrylic Clear Paintable 10 Oz. \
                        Category: Tools & Home Improvement. Brand: Geocel. Price: $11.22.\n\
                        The next item bought is as follows.\n";
        assert_eq!(prompt, expected);
    }

    #[test]
    fn user_prefix_uses_curly_apostrophe() {
        let t = template();
        assert!(t.user_prefix.contains('\u{2019}'));
        assert!(!t.user_prefix.contains('\''));
    }

    #[test]
    fn single_item_history_prefix_counts() {
        let t = template();
        let prompt = t.render_history_prompt(&[hillman()]).unwrap();
        assert_eq!(prompt.matches(&t.first_item_prefix).count(), 1);
        assert_eq!(prompt.matches(&t.next_item_prefix).count(), 1);
        assert!(prompt.ends_with(&format!("{}\n", t.next_item_prefix)));
    }

    #[test]
    fn three_item_history_prefix_counts() {
        let t = template();
        let prompt = t
            .render_history_prompt(&[hillman(), pro_flex(), trimaco()])
            .unwrap();
        assert_eq!(prompt.matches(&t.next_item_prefix).count(), 3);
        assert_eq!(prompt.matches("bought is as follows").count(), 4);
    }

    #[test]
    fn training_example_appends_target_at_offset() {
        let t = template();
        let history = [hillman(), pro_flex()];
        let (text, offset) = t.render_training_example(&history, &trimaco()).unwrap();
        let prompt = t.render_history_prompt(&history).unwrap();
        assert_eq!(offset, prompt.len());
        assert!(text.starts_with(&prompt));
        assert_eq!(
            &text[offset..],
            "Title: Trimaco Llc RF36 35-Inch by 166-Feet Rosin Flooring Paper, Red. \
             Category: Tools & Home Improvement. Brand: Trimaco. Price: Unknown."
        );
    }

    #[test]
    fn empty_history_is_an_error() {
        assert!(template().render_history_prompt(&[]).is_err());
        assert!(template().render_training_example(&[], &trimaco()).is_err());
    }
}
