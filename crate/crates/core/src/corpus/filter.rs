use std::collections::HashMap;

/// Anything attributable to a (user, item) pair.
pub trait Interaction {
    fn user(&self) -> &str;
    fn item(&self) -> &str;
}

/// Removes reviews of users or items with fewer than `min_count` reviews,
/// repeating until no further removal happens.
pub fn filter_min_activity<R: Interaction>(mut reviews: Vec<R>, min_count: usize) -> Vec<R> {
    let min_count = min_count.max(1);
    let mut passes = 0;
    loop {
        let mut users: HashMap<&str, usize> = HashMap::new();
        let mut items: HashMap<&str, usize> = HashMap::new();
        for r in &reviews {
            *users.entry(r.user()).or_default() += 1;
            *items.entry(r.item()).or_default() += 1;
        }
        let keep: Vec<bool> = reviews
            .iter()
            .map(|r| users[r.user()] >= min_count && items[r.item()] >= min_count)
            .collect();
        if keep.iter().all(|&k| k) {
            break;
        }
        passes += 1;
        let mut flags = keep.into_iter();
        reviews.retain(|_| flags.next().unwrap_or(false));
    }
    if reviews.is_empty() {
        log::warn!("activity filter (min {min_count}) removed every review");
    } else {
        log::debug!("activity filter reached fixpoint after {passes} removal passes");
    }
    reviews
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Clone, PartialEq)]
    struct Pair(String, String);

    impl Interaction for Pair {
        fn user(&self) -> &str {
            &self.0
        }
        fn item(&self) -> &str {
            &self.1
        }
    }

    fn pairs(list: &[(&str, &str)]) -> Vec<Pair> {
        list.iter()
            .map(|(u, i)| Pair(u.to_string(), i.to_string()))
            .collect()
    }

    fn counts_ok(reviews: &[Pair], min: usize) -> bool {
        reviews.iter().all(|r| {
            reviews.iter().filter(|o| o.0 == r.0).count() >= min
                && reviews.iter().filter(|o| o.1 == r.1).count() >= min
        })
    }

    #[test]
    fn already_at_fixpoint() {
        let input = pairs(&[("a", "x"), ("a", "y"), ("b", "x"), ("b", "y")]);
        assert_eq!(filter_min_activity(input.clone(), 2), input);
    }

    #[test]
    fn inactive_user_removed() {
        // user c has 1 review, everybody else >= 2
        let input = pairs(&[("a", "x"), ("a", "y"), ("b", "x"), ("b", "y"), ("c", "x")]);
        let out = filter_min_activity(input, 2);
        assert!(out.iter().all(|r| r.0 != "c"));
        assert_eq!(out.len(), 4);
    }

    #[test]
    fn two_pass_chain() {
        // Pass 1 drops user c (1 review). That leaves item z with a single
        // review (from b), so pass 2 drops it, which then leaves b with one
        // review and a third pass removes b entirely.
        let input = pairs(&[
            ("a", "x"),
            ("a", "y"),
            ("b", "z"),
            ("b", "x"),
            ("c", "z"),
            ("d", "x"),
            ("d", "y"),
        ]);
        // exhaustive recount oracle: smallest removal reaching the fixpoint
        let out = filter_min_activity(input.clone(), 2);
        assert!(counts_ok(&out, 2));
        let expected = pairs(&[("a", "x"), ("a", "y"), ("d", "x"), ("d", "y")]);
        assert_eq!(out, expected);
        // a single pass would not have been enough
        let one_pass: Vec<Pair> = input
            .iter()
            .filter(|r| {
                input.iter().filter(|o| o.0 == r.0).count() >= 2
                    && input.iter().filter(|o| o.1 == r.1).count() >= 2
            })
            .cloned()
            .collect();
        assert!(!counts_ok(&one_pass, 2));
    }

    #[test]
    fn empty_fixpoint() {
        let out = filter_min_activity(pairs(&[("a", "x"), ("b", "y")]), 2);
        assert!(out.is_empty());
    }

    #[test]
    fn output_is_a_fixpoint() {
        let input = pairs(&[
            ("a", "x"),
            ("a", "y"),
            ("a", "z"),
            ("b", "x"),
            ("b", "y"),
            ("c", "z"),
            ("c", "x"),
            ("d", "w"),
        ]);
        let once = filter_min_activity(input, 2);
        let twice = filter_min_activity(once.clone(), 2);
        assert_eq!(once, twice);
    }
}
