//! Parsing, validation, scoring and retrieval-grounded generation for a
//! workflow-automation DSL.

pub mod catalog;
pub mod dataset;
pub mod dsl;
pub mod generation;
pub mod grounding;
pub mod harness;
pub mod http;
pub mod metrics;
pub mod retrieval;

#[cfg(test)]
pub(crate) mod test_fixtures {
    pub const GROUND_TRUTH: &str = "triggerOutputs = await shared_microsoftforms.CreateFormWebhook({}); outputs_shared_teams_PostMessageToConversation = shared_teams.PostMessageToConversation({ \"poster\": \"User\" });";

    pub const PREDICTION: &str = "triggerOutputs = await shared_microsoftforms.CreateFormWebhook({});\noutputs_Get_my_profile_V2 =  shared_office365users.MyProfile_V2({});\noutputs_shared_teams_PostMessage = shared_teams.PostMessageToConversation({\"poster\": \"User\",\"location\": \"Channel\"});";

    pub const SEND_EMAIL_ENTRY: &str = r#"{
        "shared_outlook.SendEmailV2": {
            "FunctionName": "shared_outlook.SendEmailV2",
            "Description": "This operation sends an email message.",
            "IsInTrainingSet": false,
            "DisplayName": "Send an email (V2)",
            "ParametersInfo": [
                {
                    "Key": "emailMessage/To",
                    "Type": "String",
                    "Summary": "To",
                    "Format": "email",
                    "Description": "Specify email addresses separated by semicolons like someone@contoso.com"
                }
            ],
            "ResponseSchema": [],
            "IsTrigger": false
        }
    }"#;
}
