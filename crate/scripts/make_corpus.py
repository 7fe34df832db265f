#!/usr/bin/env python3
"""Writes the synthetic test corpus and catalog used by the test suites.

    python3 scripts/make_corpus.py [--samples 60] [--seed 7] [--out crates/core/tests/fixtures]

Output is deterministic for a given seed.
"""

import argparse
import json
import random
from pathlib import Path


def param(key, type_="String", summary="", description="", fmt=None):
    return {
        "Key": key,
        "Type": type_,
        "Summary": summary,
        "Format": fmt,
        "Description": description or summary,
    }


def fn(name, display, description, params, trigger=False, training=True):
    return name, {
        "FunctionName": name,
        "Description": description,
        "IsInTrainingSet": training,
        "DisplayName": display,
        "ParametersInfo": params,
        "ResponseSchema": [],
        "IsTrigger": trigger,
    }


CATALOG = dict([
    fn("shared_microsoftforms.CreateFormWebhook", "When a new response is submitted",
       "Triggers when a new response is submitted to a Microsoft Form.",
       [param("form_id", summary="Form Id", description="Identifier of the form")], trigger=True),
    fn("shared_sharepointonline.GetOnNewFileItems", "When a file is created in a folder",
       "Triggers when a new file is created in a SharePoint document library.",
       [param("dataset", summary="Site Address"), param("table", summary="Library Name")], trigger=True),
    fn("shared_office365.OnNewEmailV3", "When a new email arrives (V3)",
       "Triggers when a new email arrives in the mailbox.",
       [param("folderPath", summary="Folder"), param("importance", summary="Importance"),
        param("subjectFilter", summary="Subject Filter")], trigger=True),
    fn("builtin.Recurrence", "Recurrence", "Runs the flow on a schedule.",
       [param("frequency", summary="Frequency"), param("interval", "Integer", "Interval")], trigger=True),
    fn("shared_teams.PostMessageToConversation", "Post message in a chat or channel",
       "Posts a message to a Microsoft Teams chat or channel.",
       [param("poster", summary="Post as"), param("location", summary="Post in"),
        param("body/recipient/groupId", summary="Team"), param("body/recipient/channelId", summary="Channel"),
        param("body/messageBody", summary="Message")]),
    fn("shared_outlook.SendEmailV2", "Send an email (V2)", "This operation sends an email message.",
       [param("emailMessage/To", summary="To", fmt="email",
              description="Specify email addresses separated by semicolons like someone@contoso.com"),
        param("emailMessage/Subject", summary="Subject"), param("emailMessage/Body", summary="Body", fmt="html"),
        param("emailMessage/Importance", summary="Importance")]),
    fn("shared_planner.CreateTask", "Create a task", "Creates a new task in Planner.",
       [param("groupId", summary="Group Id"), param("planId", summary="Plan Id"),
        param("title", summary="Title"), param("assignments", summary="Assigned User Ids")]),
    fn("shared_microsoftforms.GetFormResponseById", "Get response details",
       "Gets the details of a form response.",
       [param("form_id", summary="Form Id"), param("response_id", summary="Response Id")]),
    fn("shared_office365users.MyProfile_V2", "Get my profile (V2)", "Retrieves the profile of the current user.",
       [param("$select", summary="Select fields")]),
    fn("shared_office365users.UserProfile_V2", "Get user profile (V2)", "Retrieves the profile of a specific user.",
       [param("id", summary="User (UPN)")]),
    fn("shared_sharepointonline.PostItem", "Create item", "Creates a new item in a SharePoint list.",
       [param("dataset", summary="Site Address"), param("table", summary="List Name"),
        param("item", "Object", "Item fields")]),
    fn("shared_excelonlinebusiness.AddRowV2", "Add a row into a table", "Adds a new row into an Excel table.",
       [param("source", summary="Location"), param("drive", summary="Document Library"),
        param("file", summary="File"), param("table", summary="Table"), param("item", "Object", "Row")]),
    fn("shared_approvals.StartAndWaitForAnApproval", "Start and wait for an approval",
       "Starts an approval process and waits for its outcome.",
       [param("approvalType", summary="Approval type"),
        param("WebhookApprovalCreationInput/title", summary="Title"),
        param("WebhookApprovalCreationInput/assignedTo", summary="Assigned to"),
        param("WebhookApprovalCreationInput/details", summary="Details")]),
    fn("shared_todo.CreateToDoV3", "Add a to-do", "Adds a to-do item to a list.",
       [param("folderId", summary="To-do List"), param("body/title", summary="Title"),
        param("body/importance", summary="Importance")]),
    fn("shared_onedriveforbusiness.CreateFile", "Create file", "Creates a file in OneDrive for Business.",
       [param("folderPath", summary="Folder Path"), param("name", summary="File Name"),
        param("body", "Binary", "File Content")]),
    fn("shared_slack.PostMessage", "Post message", "Posts a message to a Slack channel.",
       [param("channel", summary="Channel Name"), param("text", summary="Message Text")], training=False),
    fn("shared_trello.CreateCard", "Create a card", "Creates a card on a Trello list.",
       [param("idList", summary="List Id"), param("name", summary="Card Name"),
        param("desc", summary="Description")], training=False),
])

HELD_OUT = ["shared_slack.PostMessage", "shared_trello.CreateCard"]

TEAMS = ["Marketing", "Sales", "Support", "Finance", "Engineering", "HR"]
PEOPLE = ["alex", "sam", "jordan", "taylor", "morgan", "casey"]
SITES = ["https://contoso.sharepoint.com/sites/ops", "https://contoso.sharepoint.com/sites/hr"]

# (phrase template, qualified name, args builder)
TRIGGERS = [
    ("a new response is submitted to my form", "shared_microsoftforms.CreateFormWebhook",
     lambda r, c: {"form_id": f"form-{r.randint(100, 999)}"}),
    ("a file is added to the {lib} library", "shared_sharepointonline.GetOnNewFileItems",
     lambda r, c: {"dataset": r.choice(SITES), "table": c["lib"]}),
    ("an email with {subject} in the subject arrives", "shared_office365.OnNewEmailV3",
     lambda r, c: {"folderPath": "Inbox", "subjectFilter": c["subject"]}),
    ("every {period}", "builtin.Recurrence",
     lambda r, c: {"frequency": "Week" if c["period"] in ("monday", "week") else "Day", "interval": 1}),
]


def ref(path):
    return {"$ref": path}


def render_value(v):
    if isinstance(v, dict) and "$ref" in v:
        return v["$ref"]
    if isinstance(v, dict):
        return "{" + ", ".join(f"{json.dumps(k)}: {render_value(x)}" for k, x in v.items()) + "}"
    if isinstance(v, list):
        return "[" + ", ".join(render_value(x) for x in v) + "]"
    return json.dumps(v)


def call(target, name, args, awaited=False):
    prefix = "await " if awaited else ""
    return f"{target} = {prefix}{name}({render_value(args)});"


def action_teams(r):
    team = r.choice(TEAMS)
    args = {"poster": "Flow bot", "location": "Channel", "body/recipient/groupId": team.lower(),
            "body/messageBody": ref("triggerOutputs.body.summary")}
    return f"post a message in the {team} channel", "shared_teams.PostMessageToConversation", args


def action_email(r):
    who = r.choice(PEOPLE)
    args = {"emailMessage/To": f"{who}@contoso.com", "emailMessage/Subject": r.choice(["New item", "Heads up", "Update"]),
            "emailMessage/Body": ref("triggerOutputs.body.summary")}
    if r.random() < 0.3:
        args["emailMessage/Importance"] = "High"
        return f"send a high importance email to {who}", "shared_outlook.SendEmailV2", args
    return f"send an email to {who}", "shared_outlook.SendEmailV2", args


def action_planner(r):
    args = {"groupId": "team-" + r.choice(TEAMS).lower(), "planId": f"plan-{r.randint(1, 9)}",
            "title": ref("triggerOutputs.body.title")}
    if r.random() < 0.5:
        args["assignments"] = [f"{r.choice(PEOPLE)}@contoso.com", f"{r.choice(PEOPLE)}@contoso.com"]
        return "create a planner task assigned to two people", "shared_planner.CreateTask", args
    return "create a planner task", "shared_planner.CreateTask", args


def action_list_item(r):
    args = {"dataset": r.choice(SITES), "table": "Requests",
            "item": {"Title": ref("triggerOutputs.body.title"), "Priority": r.randint(1, 3),
                     "Meta": {"source": "flow", "tags": ["auto", r.choice(["new", "triage"])], "reviewed": False,
                              "owner": None}}}
    return "add an item to the Requests list", "shared_sharepointonline.PostItem", args


def action_excel(r):
    args = {"source": "me", "drive": "OneDrive", "file": r.choice(["/tracker.xlsx", "/log.xlsx"]), "table": "Table1",
            "item": {"Date": ref("triggerOutputs.body.created"), "Amount": round(r.uniform(1, 500), 2)}}
    return "log a row in my Excel tracker", "shared_excelonlinebusiness.AddRowV2", args


def action_todo(r):
    args = {"folderId": "Tasks", "body/title": ref("triggerOutputs.body.title")}
    return "add a to-do for myself", "shared_todo.CreateToDoV3", args


def action_file(r):
    args = {"folderPath": "/Archive", "name": ref("triggerOutputs.body.name"), "body": ref("triggerOutputs.body.content")}
    return "save a copy of it to OneDrive", "shared_onedriveforbusiness.CreateFile", args


def action_profile(r):
    return "look up my profile", "shared_office365users.MyProfile_V2", {}


def action_slack(r):
    args = {"channel": "#" + r.choice(TEAMS).lower(), "text": ref("triggerOutputs.body.summary")}
    return "post the details to Slack", "shared_slack.PostMessage", args


def action_trello(r):
    args = {"idList": f"list-{r.randint(1, 20)}", "name": ref("triggerOutputs.body.title")}
    return "create a Trello card", "shared_trello.CreateCard", args


ACTIONS = [action_teams, action_email, action_planner, action_list_item, action_excel, action_todo, action_file,
           action_profile]
HELD_OUT_ACTIONS = [action_slack, action_trello]


def target_for(name):
    return "outputs_" + name.replace(".", "_")


def make_sample(r, index, held_out):
    phrase, tname, targs = r.choice(TRIGGERS)
    choices = {"lib": r.choice(["Contracts", "Invoices", "Designs"]),
               "subject": r.choice(["invoice", "urgent", "report"]),
               "period": r.choice(["morning", "monday", "week"])}
    phrase = phrase.format(**choices)
    lines = [call("triggerOutputs", tname, targs(r, choices), awaited=True)]
    steps = []
    pool = list(ACTIONS)
    r.shuffle(pool)
    chosen = pool[: r.randint(1, 3)]
    if held_out:
        chosen[r.randrange(len(chosen))] = r.choice(HELD_OUT_ACTIONS)
    for builder in chosen:
        what, name, args = builder(r)
        steps.append(what)
        lines.append(call(target_for(name), name, args, awaited=r.random() < 0.25))

    prompt = f"When {phrase}, " + ", then ".join(steps)
    if not held_out and r.random() < 0.35:
        who = r.choice(PEOPLE)
        approval = {"approvalType": "Basic", "WebhookApprovalCreationInput/title": ref("triggerOutputs.body.title"),
                    "WebhookApprovalCreationInput/assignedTo": f"{who}@contoso.com"}
        lines.append(call("outputs_approval", "shared_approvals.StartAndWaitForAnApproval", approval, awaited=True))
        yes_what, yes_name, yes_args = action_email(r)
        no_what, no_name, no_args = action_todo(r)
        condition = r.choice([
            'outputs_approval.body.outcome == "Approve"',
            'outputs_approval.body.outcome == "Approve" && triggerOutputs.body.amount < 1000',
            '!(outputs_approval.body.outcome != "Approve") || triggerOutputs.body.urgent == true',
        ])
        branch = [f"if ({condition}) {{", "  " + call(target_for(yes_name), yes_name, yes_args)]
        if r.random() < 0.7:
            branch += ["} else {", "  " + call(target_for(no_name), no_name, no_args)]
            prompt += f", ask {who} for approval and if approved {yes_what}, otherwise {no_what}"
        else:
            prompt += f", ask {who} for approval and if approved {yes_what}"
        branch.append("}")
        lines.extend(branch)
    return {"id": f"f{index:03d}", "prompt": prompt + ".", "flow": "\n".join(lines)}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=int, default=60)
    ap.add_argument("--held-out-every", type=int, default=7)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--out", type=Path, default=Path("crates/core/tests/fixtures"))
    args = ap.parse_args()

    r = random.Random(args.seed)
    samples, prompts = [], set()
    index = 1
    while len(samples) < args.samples:
        s = make_sample(r, index, held_out=index % args.held_out_every == 0)
        if s["prompt"] in prompts:
            continue
        prompts.add(s["prompt"])
        samples.append(s)
        index += 1

    args.out.mkdir(parents=True, exist_ok=True)
    with open(args.out / "corpus.jsonl", "w") as f:
        for s in samples:
            f.write(json.dumps(s) + "\n")
    with open(args.out / "catalog.json", "w") as f:
        json.dump(CATALOG, f, indent=2)
        f.write("\n")
    with open(args.out / "held_out.json", "w") as f:
        json.dump(HELD_OUT, f, indent=2)
        f.write("\n")
    print(f"wrote {len(samples)} samples and {len(CATALOG)} definitions to {args.out}")


if __name__ == "__main__":
    main()
